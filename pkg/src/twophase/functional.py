"""Edge-preserving functional over the noise candidates and its derivatives.

For a candidate pixel with value ``u`` the functional sums ``2 * phi(u - x)``
over clean neighbors ``x`` and ``phi(u - v)`` over candidate neighbors ``v``,
with ``phi(t) = sqrt(alpha + t**2)``.  Since every candidate pair appears
twice (once from each side), its gradient carries ``2 * phi'`` on both kinds
of neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .amf_detector import NoiseMask
from .image_core import GrayImage

ABSENT, CLEAN, NOISY = 0, 1, 2

# left, right, up, down
_OFFSETS = ((0, -1), (0, 1), (-1, 0), (1, 0))


@dataclass(frozen=True)
class PotentialParams:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


def _check_alpha(alpha):
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")


def phi(alpha, x):
    _check_alpha(alpha)
    return np.sqrt(alpha + np.square(x))


def phi_d1(alpha, x):
    _check_alpha(alpha)
    return x / np.sqrt(alpha + np.square(x))


def phi_d2(alpha, x):
    _check_alpha(alpha)
    s = alpha + np.square(x)
    return alpha / (s * np.sqrt(s))


class Stencil:
    """Neighbor tables of the candidate set, one row per candidate.

    ``kind[k, s]`` tells whether side ``s`` (left, right, up, down) of
    candidate ``k`` is absent, a clean pixel (value in ``clean[k, s]``) or
    another candidate (ordinal in ``nbr[k, s]``).
    """

    def __init__(self, mask: NoiseMask, background: GrayImage):
        if mask.shape != background.shape:
            raise ValueError("mask and background sizes differ")
        height, width = mask.shape
        idx = mask.index
        n = len(idx)
        self.n = n
        self.kind = np.zeros((n, 4), dtype=np.int8)
        self.nbr = np.full((n, 4), -1, dtype=np.int64)
        self.clean = np.zeros((n, 4), dtype=np.float64)
        rows, cols = idx[:, 0], idx[:, 1]
        pix = background.pixels
        for s, (di, dj) in enumerate(_OFFSETS):
            r, c = rows + di, cols + dj
            inside = (r >= 0) & (r < height) & (c >= 0) & (c < width)
            rr, cc = r[inside], c[inside]
            noisy = mask.flags[rr, cc]
            sel = np.flatnonzero(inside)
            self.kind[sel, s] = np.where(noisy, NOISY, CLEAN)
            self.nbr[sel[noisy], s] = mask.ordinals[rr[noisy], cc[noisy]]
            self.clean[sel[~noisy], s] = pix[rr[~noisy], cc[~noisy]]
        self.is_noisy = self.kind == NOISY
        self.present = self.kind != ABSENT
        # ordinals with -1 replaced so fancy indexing is always valid
        self._gather = np.where(self.is_noisy, self.nbr, 0)
        self.cost_weight = np.select([self.kind == CLEAN, self.is_noisy], [2.0, 1.0], 0.0)

    def diffs(self, u: np.ndarray) -> np.ndarray:
        """``u_k`` minus each neighbor value; 0 on absent sides."""
        if self.n == 0:
            return np.zeros((0, 4))
        other = np.where(self.is_noisy, u[self._gather], self.clean)
        return np.where(self.present, u[:, None] - other, 0.0)

    def cost(self, u, alpha) -> float:
        d = self.diffs(u)
        return float(np.sum(self.cost_weight * phi(alpha, d)))

    def gradient(self, u, alpha) -> np.ndarray:
        d = self.diffs(u)
        return 2.0 * np.sum(np.where(self.present, phi_d1(alpha, d), 0.0), axis=1)

    def curvature(self, u, alpha) -> np.ndarray:
        """Second derivative of the functional along each coordinate."""
        d = self.diffs(u)
        return 2.0 * np.sum(np.where(self.present, phi_d2(alpha, d), 0.0), axis=1)

    def hessian_vector(self, u, alpha, v) -> np.ndarray:
        """Jacobian of the gradient at ``u`` applied to ``v``, matrix-free."""
        if self.n == 0:
            return np.zeros(0)
        w = 2.0 * np.where(self.present, phi_d2(alpha, self.diffs(u)), 0.0)
        dv = v[:, None] - np.where(self.is_noisy, v[self._gather], 0.0)
        return np.sum(w * dv, axis=1)

    @cached_property
    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Candidate-candidate adjacencies (k, l) with k < l, sorted."""
        k, s = np.nonzero(self.is_noisy)
        l = self.nbr[k, s]
        keep = k < l
        k, l = k[keep], l[keep]
        order = np.lexsort((l, k))
        return k[order], l[order]


@dataclass
class RestorationState:
    """Candidate values ``u`` (ordered by ``mask.index``) and the image they live in."""

    u: np.ndarray
    background: GrayImage
    mask: NoiseMask
    _stencil: Stencil | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        if self.u.shape != (self.mask.count,):
            raise ValueError(f"u has shape {self.u.shape}, expected ({self.mask.count},)")
        if self.background.shape != self.mask.shape:
            raise ValueError("background and mask sizes differ")

    @classmethod
    def from_images(cls, background: GrayImage, mask: NoiseMask) -> "RestorationState":
        """Start from the values ``background`` holds at the candidates."""
        idx = mask.index
        return cls(background.pixels[idx[:, 0], idx[:, 1]].copy(), background, mask)

    @property
    def stencil(self) -> Stencil:
        if self._stencil is None:
            self._stencil = Stencil(self.mask, self.background)
        return self._stencil

    def with_u(self, u) -> "RestorationState":
        return RestorationState(np.array(u, dtype=np.float64), self.background, self.mask, self.stencil)

    def to_image(self) -> GrayImage:
        """Background with candidates overwritten by ``u`` clamped to [0, 255]."""
        out = self.background.copy_pixels()
        idx = self.mask.index
        out[idx[:, 0], idx[:, 1]] = np.clip(self.u, 0.0, 255.0)
        return GrayImage(out)


@dataclass
class SparseSymSystem:
    """Symmetric matrix stored as its diagonal plus upper off-diagonal triplets."""

    n: int
    diag: np.ndarray
    off_rows: np.ndarray
    off_cols: np.ndarray
    off_vals: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        self.diag = np.asarray(self.diag, dtype=np.float64)
        self.rhs = np.asarray(self.rhs, dtype=np.float64)
        self.off_rows = np.asarray(self.off_rows, dtype=np.int64)
        self.off_cols = np.asarray(self.off_cols, dtype=np.int64)
        self.off_vals = np.asarray(self.off_vals, dtype=np.float64)
        if self.diag.shape != (self.n,) or self.rhs.shape != (self.n,):
            raise ValueError("diag and rhs must have length n")
        if not (self.off_rows.shape == self.off_cols.shape == self.off_vals.shape):
            raise ValueError("off-diagonal triplet arrays differ in length")
        if np.any(self.off_rows >= self.off_cols):
            raise ValueError("off-diagonal entries must satisfy row < col")

    @property
    def off(self) -> list[tuple[int, int, float]]:
        return list(zip(self.off_rows.tolist(), self.off_cols.tolist(), self.off_vals.tolist()))

    @cached_property
    def csr(self):
        import scipy.sparse as sp

        rows = np.concatenate([np.arange(self.n), self.off_rows, self.off_cols])
        cols = np.concatenate([np.arange(self.n), self.off_cols, self.off_rows])
        vals = np.concatenate([self.diag, self.off_vals, self.off_vals])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    def to_dense(self) -> np.ndarray:
        a = np.diag(self.diag)
        a[self.off_rows, self.off_cols] = self.off_vals
        a[self.off_cols, self.off_rows] = self.off_vals
        return a

    @classmethod
    def from_dense(cls, a, rhs) -> "SparseSymSystem":
        a = np.asarray(a, dtype=np.float64)
        if not np.array_equal(a, a.T):
            raise ValueError("matrix is not symmetric")
        r, c = np.nonzero(np.triu(a, 1))
        return cls(a.shape[0], np.diag(a).copy(), r, c, a[r, c], rhs)


def cost(state: RestorationState, params: PotentialParams) -> float:
    return state.stencil.cost(state.u, params.alpha)


def gradient(state: RestorationState, params: PotentialParams) -> np.ndarray:
    return state.stencil.gradient(state.u, params.alpha)


def scalar_derivs(state: RestorationState, params: PotentialParams, k: int) -> tuple[float, float]:
    """First and second partial derivative of the functional in coordinate ``k``."""
    st = state.stencil
    if not 0 <= k < st.n:
        raise IndexError(f"ordinal {k} out of range for {st.n} candidates")
    g = h = 0.0
    uk = state.u[k]
    for s in range(4):
        if st.kind[k, s] == ABSENT:
            continue
        other = state.u[st.nbr[k, s]] if st.kind[k, s] == NOISY else st.clean[k, s]
        g += 2.0 * phi_d1(params.alpha, uk - other)
        h += 2.0 * phi_d2(params.alpha, uk - other)
    return float(g), float(h)


def newton_system(state: RestorationState, params: PotentialParams) -> SparseSymSystem:
    """Jacobian of the gradient at ``state.u`` with right-hand side ``-gradient``."""
    st = state.stencil
    u, alpha = state.u, params.alpha
    k, l = st.pairs
    return SparseSymSystem(
        n=st.n,
        diag=st.curvature(u, alpha),
        off_rows=k,
        off_cols=l,
        off_vals=-2.0 * phi_d2(alpha, u[k] - u[l]),
        rhs=-st.gradient(u, alpha),
    )
