from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from rpace.core.errors import (
    DegenerateInputError,
    DomainError,
    EstimationError,
    InvalidInputError,
    OptimizationError,
    OutOfDomainError,
    RpaceError,
)
from rpace.data.dataset import LongitudinalDataset, PooledObservations
from rpace.estimation.smoothing import WeightScheme, local_weight, mean_weights, moments_from
from rpace.geometry import Manifold

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 51
ARMIJO_C = 1e-4
BACKTRACK = 0.5
MAX_HALVINGS = 60
GRAD_TOL = 1e-8
# accepted as stationary when the line search can no longer resolve a decrease
STALL_TOL = 1e-6
# objective changes below this relative size are floating-point noise
ROUNDOFF_REL = 1e-13


@dataclass(frozen=True)
class MeanCurve:
    manifold: Manifold
    grid: np.ndarray
    points: np.ndarray
    bandwidth: float
    scheme: WeightScheme | None = None

    def at(self, t) -> np.ndarray:
        return eval_mean(self, t)


@dataclass(frozen=True)
class DescentTrace:
    point: np.ndarray
    objective: float
    grad_norm: float
    iterations: int
    history: tuple[float, ...]


def working_grid(data: LongitudinalDataset, size: int = DEFAULT_GRID_SIZE, span: tuple[float, float] | None = None) -> np.ndarray:
    lo, hi = span if span is not None else data.time_range
    if int(size) < 2:
        raise InvalidInputError(f"grid size must be >= 2, got {size}")
    if not hi > lo:
        raise InvalidInputError(f"degenerate time range [{lo}, {hi}]")
    return np.linspace(float(lo), float(hi), int(size))


def _resolve_weights(data: LongitudinalDataset, h: float, weights) -> tuple[np.ndarray, WeightScheme | None]:
    if isinstance(weights, (str, WeightScheme)):
        scheme = WeightScheme.parse(weights)
        return mean_weights(scheme, data.counts, h), scheme
    w = np.asarray(weights, dtype=float)
    if w.shape != (data.n_subjects,):
        raise InvalidInputError(f"expected {data.n_subjects} subject weights, got shape {w.shape}")
    return w, None


def _local_problem(pooled: PooledObservations, obs_w: np.ndarray, t: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Combined weights w_i * omega_ij and points for the observations inside (t-h, t+h)."""
    sl = pooled.window(t, h)
    times = pooled.times[sl]
    moments = moments_from(t, h, times, obs_w[sl]).require(h)
    coef = obs_w[sl] * local_weight(times, t, h, moments)
    return coef, pooled.points[sl]


def _objective(manifold: Manifold, y: np.ndarray, coef: np.ndarray, points: np.ndarray) -> float:
    return float(coef @ manifold.dist(y, points) ** 2)


def frechet_objective(y, t: float, h: float, data: LongitudinalDataset, weights) -> float:
    """Q_n(y, t) = sum_i w_i sum_j omega_ij d^2(Y_ij, y)."""
    w, _ = _resolve_weights(data, h, weights)
    pooled = data.pooled()
    coef, points = _local_problem(pooled, w[pooled.subject], t, h)
    return _objective(data.manifold, data.manifold.coords(y), coef, points)


def extrinsic_start(manifold: Manifold, coef: np.ndarray, points: np.ndarray) -> np.ndarray:
    try:
        return manifold.project(coef @ points)
    except DegenerateInputError:
        return np.array(points[int(np.argmax(coef))], copy=True)


def minimize_frechet(
    manifold: Manifold,
    coef: np.ndarray,
    points: np.ndarray,
    init: np.ndarray,
    *,
    t: float = float("nan"),
    max_iter: int = 200,
    tol: float = GRAD_TOL,
) -> DescentTrace:
    """Riemannian gradient descent with Armijo backtracking on sum_k coef_k d^2(y, points_k).

    The gradient is -2 sum_k coef_k log_y(points_k); the unit step along the negative half
    gradient is tried first and halved until the Armijo condition holds.
    """
    def half_gradient(y: np.ndarray) -> np.ndarray:
        try:
            return coef @ manifold.log_map(y, points)
        except DomainError as exc:
            raise type(exc)(f"mean at t={t:g}: {exc}") from exc

    y = np.asarray(init, dtype=float)
    f = _objective(manifold, y, coef, points)
    history = [f]
    for it in range(max_iter):
        direction = half_gradient(y)
        dd = float(direction @ direction)
        grad_norm = 2.0 * np.sqrt(dd)
        if grad_norm <= tol * (1.0 + abs(f)):
            return DescentTrace(y, f, grad_norm, it, tuple(history))
        stalled = grad_norm <= STALL_TOL * (1.0 + abs(f))
        step = 1.0
        for _ in range(MAX_HALVINGS):
            cand = manifold.exp_map(y, step * direction)
            f_new = _objective(manifold, cand, coef, points)
            if f_new <= f - ARMIJO_C * 2.0 * step * dd:
                break
            step *= BACKTRACK
        else:
            if stalled:
                logger.debug("line search stalled at t=%g with |grad|=%.3g; accepting", t, grad_norm)
                return DescentTrace(y, f, grad_norm, it, tuple(history))
            raise OptimizationError(f"line search failed at t={t:g} (|grad|={grad_norm:.3g})", t, y)
        # once 2*c*dd drops below an ulp of f the Armijo test degenerates to f_new <= f
        if stalled and f - f_new <= ROUNDOFF_REL * abs(f):
            logger.debug("objective flat to roundoff at t=%g with |grad|=%.3g; accepting", t, grad_norm)
            return DescentTrace(y, f, grad_norm, it, tuple(history))
        y, f = cand, f_new
        history.append(f)
    grad_norm = 2.0 * float(np.linalg.norm(half_gradient(y)))
    if grad_norm <= STALL_TOL * (1.0 + abs(f)):
        logger.debug("iteration cap reached at t=%g with |grad|=%.3g; accepting", t, grad_norm)
        return DescentTrace(y, f, grad_norm, max_iter, tuple(history))
    raise OptimizationError(f"no convergence after {max_iter} iterations at t={t:g}", t, y)


def estimate_mean_at(
    t: float,
    h: float,
    data: LongitudinalDataset,
    weights,
    init=None,
    *,
    max_iter: int = 200,
) -> np.ndarray:
    w, _ = _resolve_weights(data, h, weights)
    pooled = data.pooled()
    coef, points = _local_problem(pooled, w[pooled.subject], t, h)
    manifold = data.manifold
    start = extrinsic_start(manifold, coef, points) if init is None else manifold.coords(init)
    return minimize_frechet(manifold, coef, points, start, t=t, max_iter=max_iter).point


def estimate_mean_path(
    data: LongitudinalDataset,
    h: float,
    weights,
    times: Sequence[float],
    *,
    max_iter: int = 200,
) -> np.ndarray:
    """Mean estimates at increasing `times`, each warm-started from the previous solution."""
    w, _ = _resolve_weights(data, h, weights)
    pooled = data.pooled()
    obs_w = w[pooled.subject]
    manifold = data.manifold
    times = np.asarray(times, dtype=float)
    out = np.empty((times.size, manifold.ambient_dim))
    failures: list[tuple[object, str]] = []
    prev: np.ndarray | None = None
    for g, t in enumerate(times):
        try:
            coef, points = _local_problem(pooled, obs_w, t, h)
            start = extrinsic_start(manifold, coef, points) if prev is None else prev
            out[g] = minimize_frechet(manifold, coef, points, start, t=t, max_iter=max_iter).point
            prev = out[g]
        except RpaceError as exc:
            failures.append((f"{g}@t={t:g}", str(exc)))
            out[g] = np.nan
    if failures:
        raise EstimationError(f"mean estimation failed at {len(failures)} of {times.size} points", failures)
    return out


def estimate_mean_curve(
    data: LongitudinalDataset,
    h: float,
    weights,
    grid: np.ndarray | None = None,
    *,
    max_iter: int = 200,
) -> MeanCurve:
    grid = working_grid(data) if grid is None else np.asarray(grid, dtype=float)
    _, scheme = _resolve_weights(data, h, weights)
    points = estimate_mean_path(data, h, weights, grid, max_iter=max_iter)
    logger.info("mean curve estimated on %d grid points (h_mu=%.6g)", grid.size, h)
    return MeanCurve(data.manifold, grid, points, float(h), scheme)


def eval_mean(curve: MeanCurve, t) -> np.ndarray:
    """Geodesic interpolation of the grid curve; exact at grid nodes."""
    t_arr = np.asarray(t, dtype=float)
    t1 = np.atleast_1d(t_arr)
    g = curve.grid
    slack = 1e-12 * max(1.0, abs(g[-1] - g[0]))
    if np.any(~np.isfinite(t1)) or np.any(t1 < g[0] - slack) or np.any(t1 > g[-1] + slack):
        raise OutOfDomainError(f"time outside mean grid range [{g[0]:g}, {g[-1]:g}]")
    t1 = np.clip(t1, g[0], g[-1])
    idx = np.clip(np.searchsorted(g, t1, side="right") - 1, 0, g.size - 2)
    frac = (t1 - g[idx]) / (g[idx + 1] - g[idx])
    pa = curve.points[idx]
    pb = curve.points[idx + 1]
    m = curve.manifold
    out = m.exp_map(pa, frac[:, None] * m.log_map(pa, pb))
    out = np.where((t1 == g[idx])[:, None], pa, out)
    out = np.where((t1 == g[idx + 1])[:, None], pb, out)
    return out[0] if t_arr.ndim == 0 else out
