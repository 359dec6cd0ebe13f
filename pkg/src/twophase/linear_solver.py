"""MINRES for symmetric, possibly indefinite, sparse systems.

The default path is the classical Paige-Saunders scheme: the three-term
Lanczos recurrence builds an orthonormal Krylov basis, and Givens rotations
reduce the (k+1) x k tridiagonal Lanczos matrix to upper triangular form one
column at a time, so both the iterate and its residual norm are updated with
O(n) work and memory per step.

``MinresConfig(reorthogonalize=True)`` switches to a variant that
orthogonalizes every new basis vector against all previous ones (Gram-Schmidt
as in the Arnoldi process) and solves the small least-squares problem over
the full Hessenberg matrix.  It is mathematically identical for symmetric
matrices and exists for cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .functional import SparseSymSystem

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class MinresConfig:
    tol: float = 1e-8
    max_iter: int | None = None  # None means 2 * n
    reorthogonalize: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def iteration_cap(self, n: int) -> int:
        return self.max_iter if self.max_iter is not None else max(2 * n, 1)


@dataclass
class MinresResult:
    x: np.ndarray
    residual_history: list[float]
    converged: bool
    iterations: int

    def __iter__(self):
        # allows ``x, history, converged = minres_solve(...)``
        return iter((self.x, self.residual_history, self.converged))


def matvec(sys: SparseSymSystem, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (sys.n,):
        raise ValueError(f"vector of shape {v.shape} does not match system of size {sys.n}")
    if sys.n == 0:
        return np.zeros(0)
    return sys.csr @ v


def lanczos(apply_a, r0: np.ndarray) -> Iterator[tuple[np.ndarray, float, float]]:
    """Symmetric Lanczos process started from ``r0``.

    Yields ``(q_k, alpha_k, beta_{k+1})`` for k = 1, 2, ...; stops after a
    zero ``beta`` (invariant subspace found).
    """
    beta = float(np.linalg.norm(r0))
    if beta == 0.0:
        return
    q_prev = np.zeros_like(r0)
    q = r0 / beta
    beta = 0.0
    anorm = 0.0
    while True:
        p = apply_a(q)
        if beta:
            p -= beta * q_prev
        alpha = float(q @ p)
        p -= alpha * q
        beta_next = float(np.linalg.norm(p))
        anorm = max(anorm, np.sqrt(alpha**2 + beta**2 + beta_next**2))
        if beta_next <= len(r0) * _EPS * anorm:
            yield q, alpha, 0.0
            return
        yield q, alpha, beta_next
        q_prev, q, beta = q, p / beta_next, beta_next


def lanczos_basis(sys: SparseSymSystem, r0: np.ndarray, k: int) -> np.ndarray:
    """First ``k`` Lanczos vectors as rows (fewer if the process breaks down)."""
    out = []
    for q, _, _ in lanczos(lambda v: matvec(sys, v), np.asarray(r0, dtype=np.float64)):
        out.append(q)
        if len(out) == k:
            break
    return np.array(out)


def _rotation(a: float, b: float) -> tuple[float, float, float]:
    # c, s, r with [c s; -s c] @ [a, b] = [r, 0]
    r = float(np.hypot(a, b))
    if r == 0.0:
        return 1.0, 0.0, 0.0
    return a / r, b / r, r


def minres_solve(sys: SparseSymSystem, x0=None, cfg: MinresConfig = MinresConfig()) -> MinresResult:
    """Minimize ``||b - A x||`` over ``x0`` plus the Krylov space of the initial residual.

    ``residual_history[i]`` is the residual norm after ``i`` iterations
    (entry 0 is the initial residual).  Returns a :class:`MinresResult`, which
    also unpacks as ``(x, residual_history, converged)``.
    """
    n = sys.n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != (n,):
        raise ValueError(f"x0 of shape {x.shape} does not match system of size {n}")
    if n == 0:
        return MinresResult(x, [0.0], True, 0)
    b = sys.rhs
    r0 = b - matvec(sys, x)
    bnorm = float(np.linalg.norm(b))
    scale = bnorm if bnorm > 0 else 1.0
    phibar = float(np.linalg.norm(r0))
    history = [phibar]
    if phibar <= cfg.tol * scale:
        return MinresResult(x, history, True, 0)
    if cfg.reorthogonalize:
        return _minres_full(sys, x, r0, cfg, scale)

    cap = cfg.iteration_cap(n)
    apply_a = lambda v: matvec(sys, v)  # noqa: E731
    c_old, s_old = 1.0, 0.0  # rotation k-2
    c, s = 1.0, 0.0  # rotation k-1
    beta = 0.0  # subdiagonal entry entering column k
    w_old = np.zeros(n)
    w = np.zeros(n)
    it = 0
    converged = False
    for q, alpha, beta_next in lanczos(apply_a, r0):
        it += 1
        # previous rotations applied to the new column (beta, alpha, beta_next)
        eps_k = s_old * beta
        delta_bar = c_old * beta
        delta = c * delta_bar + s * alpha
        gamma_bar = -s * delta_bar + c * alpha
        c_new, s_new, gamma = _rotation(gamma_bar, beta_next)
        if gamma == 0.0:
            # singular, inconsistent direction; nothing more to gain
            break
        tau = c_new * phibar
        phibar = -s_new * phibar
        w_new = (q - delta * w - eps_k * w_old) / gamma
        x += tau * w_new
        history.append(abs(phibar))
        w_old, w = w, w_new
        c_old, s_old, c, s = c, s, c_new, s_new
        beta = beta_next
        if abs(phibar) <= cfg.tol * scale or beta_next == 0.0:
            converged = True
            break
        if it >= cap:
            break
    return MinresResult(x, history, converged, it)


def _minres_full(sys, x, r0, cfg, scale) -> MinresResult:
    n = sys.n
    cap = min(cfg.iteration_cap(n), n)
    beta1 = float(np.linalg.norm(r0))
    basis = [r0 / beta1]
    rot_c: list[float] = []
    rot_s: list[float] = []
    r_cols: list[np.ndarray] = []
    g = [beta1]
    history = [beta1]
    converged = False
    anorm = 0.0
    for k in range(cap):
        v = matvec(sys, basis[k])
        h = np.zeros(k + 2)
        for i in range(k + 1):
            h[i] = basis[i] @ v
            v -= h[i] * basis[i]
        h[k + 1] = h_sub = np.linalg.norm(v)
        anorm = max(anorm, float(np.linalg.norm(h)))
        breakdown = h_sub <= n * _EPS * anorm
        for i in range(k):
            a, b = h[i], h[i + 1]
            h[i] = rot_c[i] * a + rot_s[i] * b
            h[i + 1] = -rot_s[i] * a + rot_c[i] * b
        c, s, rkk = _rotation(h[k], 0.0 if breakdown else h[k + 1])
        if rkk == 0.0:
            break
        h[k], h[k + 1] = rkk, 0.0
        rot_c.append(c)
        rot_s.append(s)
        r_cols.append(h[: k + 1].copy())
        g.append(-s * g[k])
        g[k] = c * g[k]
        history.append(abs(g[k + 1]))
        if breakdown or abs(g[k + 1]) <= cfg.tol * scale:
            converged = True
            break
        basis.append(v / h_sub)
    m = len(r_cols)
    if m:
        r = np.zeros((m, m))
        for j, col in enumerate(r_cols):
            r[: j + 1, j] = col
        y = np.linalg.solve(np.triu(r), np.array(g[:m]))
        x = x + np.array(basis[:m]).T @ y
    return MinresResult(x, history, converged, m)
