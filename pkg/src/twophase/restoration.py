"""Phase two: minimize the functional over the noise candidates.

Three families of inner solvers share one continuation driver, which solves
a sequence of problems with decreasing ``alpha`` and warm-starts each stage
from the previous solution:

* ``relax``: Gauss-Seidel sweeps of scalar Newton updates, one candidate at a
  time in mask order;
* ``newton_minres``: full Newton steps whose linear systems are solved with
  MINRES;
* ``cg_fr`` / ``cg_pr`` / ``cg_hs``: nonlinear conjugate gradients with a
  backtracking Armijo line search.
"""

from __future__ import annotations

import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field

import numba
import numpy as np

from .amf_detector import NoiseMask
from .functional import PotentialParams, RestorationState, Stencil, newton_system
from .image_core import GrayImage
from .linear_solver import MinresConfig, minres_solve

log = logging.getLogger(__name__)

METHODS = ("relax", "newton_minres", "cg_fr", "cg_pr", "cg_hs")
CG_VARIANTS = ("FR", "PR", "HS")

BASE_ALPHAS = (160000.0, 5000.0, 1250.0, 312.5, 156.25, 78.125, 39.0625)


@dataclass(frozen=True)
class StopCriteria:
    """Stage ends when both relative changes drop below tolerance, or at ``ite_max``."""

    rel_u_tol: float = 1e-4
    rel_f_tol: float = 1e-4
    ite_max: int = 500

    def __post_init__(self):
        if not (self.rel_u_tol > 0 and self.rel_f_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.ite_max < 1:
            raise ValueError("ite_max must be at least 1")

    @staticmethod
    def relative_changes(u_new, u_old, f_new, f_old) -> tuple[float, float]:
        du = float(np.linalg.norm(u_new - u_old))
        nu = float(np.linalg.norm(u_new))
        rel_u = du / nu if nu > 0 else (0.0 if du == 0 else math.inf)
        df = abs(f_new - f_old)
        rel_f = df / f_new if f_new > 0 else (0.0 if df == 0 else math.inf)
        return rel_u, rel_f

    def passes(self, rel_u: float, rel_f: float) -> bool:
        return rel_u <= self.rel_u_tol and rel_f <= self.rel_f_tol


@dataclass(frozen=True)
class ContinuationSchedule:
    alphas: tuple[float, ...]

    def __post_init__(self):
        a = tuple(float(x) for x in self.alphas)
        if not a:
            raise ValueError("schedule needs at least one alpha")
        if any(x <= 0 for x in a):
            raise ValueError("alphas must be positive")
        if any(b >= c for c, b in zip(a, a[1:])):
            raise ValueError("alphas must be strictly decreasing")
        object.__setattr__(self, "alphas", a)

    @classmethod
    def default(cls, alpha_min: float = 1.0) -> "ContinuationSchedule":
        """160000, 5000, 1250, 312.5, ..., 39.0625, then halving.

        The schedule stops with the first value at or below ``alpha_min``.
        """
        if not alpha_min > 0:
            raise ValueError("alpha_min must be positive")
        alphas = []
        for a in BASE_ALPHAS:
            alphas.append(a)
            if a <= alpha_min:
                return cls(tuple(alphas))
        while alphas[-1] > alpha_min:
            alphas.append(alphas[-1] / 2)
        return cls(tuple(alphas))

    def __iter__(self):
        return iter(self.alphas)

    def __len__(self):
        return len(self.alphas)


@dataclass
class StageRecord:
    alpha: float
    iterations: int
    final_cost: float
    stop_reason: str
    inner_iterations: int = 0
    inner_nonconverged: int = 0
    # (relative u change, relative F change) after each completed iteration
    changes: list[tuple[float, float]] = field(default_factory=list, repr=False)


@dataclass
class SolverReport:
    method: str
    outer_stages: list[StageRecord] = field(default_factory=list)
    elapsed_seconds: float = 0.0
    final_u: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def total_iterations(self) -> int:
        return sum(s.iterations for s in self.outer_stages)

    @property
    def stop_reason(self) -> str:
        """``tolerance`` if every stage converged, else the most common failure reason."""
        bad = [s.stop_reason for s in self.outer_stages if s.stop_reason != "tolerance"]
        return Counter(bad).most_common(1)[0][0] if bad else "tolerance"

    @property
    def final_cost(self) -> float:
        return self.outer_stages[-1].final_cost if self.outer_stages else 0.0


# ---------------------------------------------------------------------------
# relaxation


@numba.njit(cache=True)
def _local_energy(t, k, u, kind, nbr, clean, alpha):
    e = 0.0
    for s in range(4):
        if kind[k, s] == 0:
            continue
        v = u[nbr[k, s]] if kind[k, s] == 2 else clean[k, s]
        e += 2.0 * math.sqrt(alpha + (t - v) ** 2)
    return e


@numba.njit(cache=True)
def _local_grad(t, k, u, kind, nbr, clean, alpha):
    g = 0.0
    for s in range(4):
        if kind[k, s] == 0:
            continue
        v = u[nbr[k, s]] if kind[k, s] == 2 else clean[k, s]
        d = t - v
        g += 2.0 * d / math.sqrt(alpha + d * d)
    return g


@numba.njit(cache=True)
def _relax_sweep(u, kind, nbr, clean, alpha, n_bisect):
    max_update = 0.0
    for k in range(u.shape[0]):
        uk = u[k]
        g = 0.0
        h = 0.0
        lo = np.inf
        hi = -np.inf
        for s in range(4):
            if kind[k, s] == 0:
                continue
            v = u[nbr[k, s]] if kind[k, s] == 2 else clean[k, s]
            d = uk - v
            sq = alpha + d * d
            r = math.sqrt(sq)
            g += 2.0 * d / r
            h += 2.0 * alpha / (sq * r)
            lo = min(lo, v)
            hi = max(hi, v)
        if g == 0.0:
            continue
        lo -= 1.0
        hi += 1.0
        new = uk - g / h
        ok = lo <= new <= hi
        if ok:
            ok = _local_energy(new, k, u, kind, nbr, clean, alpha) <= _local_energy(uk, k, u, kind, nbr, clean, alpha)
        if not ok:
            # the minimizer lies in [lo, hi] on the downhill side of uk
            if g > 0.0:
                a, b = lo, min(uk, hi)
            else:
                a, b = max(uk, lo), hi
            for _ in range(n_bisect):
                mid = 0.5 * (a + b)
                if _local_grad(mid, k, u, kind, nbr, clean, alpha) > 0.0:
                    b = mid
                else:
                    a = mid
            new = b if g > 0.0 else a
        u[k] = new
        max_update = max(max_update, abs(new - uk))
    return max_update


def relax_sweep(state: RestorationState, params: PotentialParams, n_bisect: int = 10) -> tuple[RestorationState, float]:
    """One pass of scalar Newton updates over the candidates in mask order.

    Each update uses the values already refreshed earlier in the same pass.
    A step that leaves ``[min(neighbors) - 1, max(neighbors) + 1]`` or raises
    the local energy is replaced by ``n_bisect`` bisection steps on the
    coordinate derivative; the bracket end on the current value's side is
    kept, so no update increases the functional.
    """
    st = state.stencil
    u = state.u.copy()
    max_update = _relax_sweep(u, st.kind, st.nbr, st.clean, float(params.alpha), n_bisect)
    return state.with_u(u), float(max_update)


# ---------------------------------------------------------------------------
# Newton-MINRES


@dataclass
class NewtonStepInfo:
    step_norm: float
    inner_iterations: int
    inner_converged: bool


def newton_minres_step(state: RestorationState, params: PotentialParams,
                       cfg: MinresConfig = MinresConfig()) -> tuple[RestorationState, NewtonStepInfo]:
    """Solve the Newton system with MINRES from a zero start and take the full step."""
    sys = newton_system(state, params)
    res = minres_solve(sys, None, cfg)
    if not res.converged:
        log.debug("MINRES stopped at residual %.3g after %d iterations",
                  res.residual_history[-1], res.iterations)
    z = res.x
    return state.with_u(state.u + z), NewtonStepInfo(float(np.linalg.norm(z)), res.iterations, res.converged)


# ---------------------------------------------------------------------------
# nonlinear conjugate gradients


def _cg_beta(variant, g_new, g_old, d_old):
    if variant == "FR":
        return float(g_new @ g_new) / float(g_old @ g_old)
    y = g_new - g_old
    if variant == "PR":
        return float(g_new @ y) / float(g_old @ g_old)
    denom = float(d_old @ y)
    return float(g_new @ y) / denom if denom != 0.0 else -1.0


def _armijo(st: Stencil, u, f, gd, d, t0, alpha, c1=1e-4, max_backtracks=40):
    t = t0
    for _ in range(max_backtracks + 1):
        u_try = u + t * d
        f_try = st.cost(u_try, alpha)
        if f_try <= f + c1 * t * gd:
            return u_try, f_try
        t *= 0.5
    return None, None


def nonlinear_cg(state: RestorationState, params: PotentialParams, variant: str,
                 stop: StopCriteria = StopCriteria()) -> tuple[RestorationState, StageRecord]:
    """Run one continuation stage of nonlinear CG (Fletcher-Reeves, Polak-Ribiere or Hestenes-Stiefel).

    The first trial step of each line search is the 1-D Newton step along the
    search direction, computed from an exact Hessian-vector product; Armijo
    backtracking (c1 = 1e-4, halving, at most 40 times) follows.  The
    direction restarts to steepest descent when beta < 0, every |N|
    iterations, or after a failed line search; two failures in a row end
    the stage.
    """
    variant = variant.upper()
    if variant not in CG_VARIANTS:
        raise ValueError(f"unknown CG variant {variant!r}")
    st = state.stencil
    alpha = float(params.alpha)
    u = state.u.copy()
    n = len(u)
    f = st.cost(u, alpha)
    g = st.gradient(u, alpha)
    d = -g
    record = StageRecord(alpha, 0, f, "ite_max")
    failures = 0
    since_restart = 0
    it = 0
    while it < stop.ite_max:
        if not np.any(g):
            record.stop_reason = "tolerance"
            break
        it += 1
        gd = float(g @ d)
        if gd >= 0.0:
            d, gd, since_restart = -g, -float(g @ g), 0
        curv = float(d @ st.hessian_vector(u, alpha, d))
        t0 = -gd / curv if curv > 0 else 1.0
        u_new, f_new = _armijo(st, u, f, gd, d, t0, alpha)
        if u_new is None:
            failures += 1
            if failures >= 2:
                record.stop_reason = "line_search"
                break
            d, since_restart = -g, 0
            continue
        failures = 0
        g_new = st.gradient(u_new, alpha)
        changes = stop.relative_changes(u_new, u, f_new, f)
        record.changes.append(changes)
        since_restart += 1
        beta = _cg_beta(variant, g_new, g, d)
        if beta < 0 or since_restart >= n:
            beta, since_restart = 0.0, 0
        d = -g_new + beta * d
        u, f, g = u_new, f_new, g_new
        if stop.passes(*changes):
            record.stop_reason = "tolerance"
            break
    record.iterations, record.final_cost = it, f
    return state.with_u(u), record


# ---------------------------------------------------------------------------
# continuation driver


def _stage_relax(state, params, stop):
    st = state.stencil
    alpha = float(params.alpha)
    u = state.u.copy()
    f = st.cost(u, alpha)
    record = StageRecord(alpha, 0, f, "ite_max")
    for it in range(1, stop.ite_max + 1):
        u_old = u.copy()
        _relax_sweep(u, st.kind, st.nbr, st.clean, alpha, 10)
        f_old, f = f, st.cost(u, alpha)
        changes = stop.relative_changes(u, u_old, f, f_old)
        record.changes.append(changes)
        record.iterations, record.final_cost = it, f
        if stop.passes(*changes):
            record.stop_reason = "tolerance"
            break
    return state.with_u(u), record


def _stage_newton(state, params, stop, minres_cfg):
    alpha = float(params.alpha)
    f = state.stencil.cost(state.u, alpha)
    record = StageRecord(alpha, 0, f, "ite_max")
    for it in range(1, stop.ite_max + 1):
        new, info = newton_minres_step(state, params, minres_cfg)
        record.inner_iterations += info.inner_iterations
        record.inner_nonconverged += not info.inner_converged
        f_old, f = f, new.stencil.cost(new.u, alpha)
        changes = stop.relative_changes(new.u, state.u, f, f_old)
        record.changes.append(changes)
        state = new
        record.iterations, record.final_cost = it, f
        if stop.passes(*changes):
            record.stop_reason = "tolerance"
            break
    return state, record


def run_stage(method: str, state: RestorationState, params: PotentialParams,
              stop: StopCriteria = StopCriteria(), minres_cfg: MinresConfig = MinresConfig()):
    """Minimize at fixed ``alpha`` with ``method``; returns ``(state, StageRecord)``."""
    if method == "relax":
        return _stage_relax(state, params, stop)
    if method == "newton_minres":
        return _stage_newton(state, params, stop, minres_cfg)
    if method.startswith("cg_") and method[3:].upper() in CG_VARIANTS:
        return nonlinear_cg(state, params, method[3:], stop)
    raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")


def restore(img_observed: GrayImage, mask: NoiseMask, u0: GrayImage, method: str = "relax",
            schedule: ContinuationSchedule | None = None, stop: StopCriteria = StopCriteria(),
            minres_cfg: MinresConfig = MinresConfig()) -> tuple[GrayImage, SolverReport]:
    """Restore the candidate pixels of ``img_observed``, starting from ``u0``.

    Pixels outside ``mask`` are copied bit-for-bit from ``img_observed``.
    The reported time covers this phase only.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    if schedule is None:
        schedule = ContinuationSchedule.default()
    if img_observed.shape != mask.shape or u0.shape != mask.shape:
        raise ValueError("image, mask and initial guess sizes differ")
    report = SolverReport(method)
    if mask.count == 0:
        return img_observed, report

    start = time.perf_counter()
    background = img_observed.copy_pixels()
    background[mask.flags] = u0.pixels[mask.flags]
    state = RestorationState.from_images(GrayImage(background), mask)
    for alpha in schedule:
        state, record = run_stage(method, state, PotentialParams(alpha), stop, minres_cfg)
        report.outer_stages.append(record)
        log.debug("%s alpha=%g: %d iterations, F=%.6g (%s)", method, alpha,
                  record.iterations, record.final_cost, record.stop_reason)
    restored = img_observed.copy_pixels()
    restored[mask.flags] = np.clip(state.u, 0.0, 255.0)
    report.elapsed_seconds = time.perf_counter() - start
    report.final_u = state.u
    return GrayImage(restored), report
