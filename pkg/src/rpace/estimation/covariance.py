from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from rpace.core.errors import (
    BandwidthTooSmallError,
    CutLocusError,
    InvalidInputError,
    InvariantViolation,
)
from rpace.data.dataset import LongitudinalDataset
from rpace.estimation.mean import MeanCurve, eval_mean
from rpace.estimation.smoothing import EPANECHNIKOV, KernelSpec

logger = logging.getLogger(__name__)

COND_LIMIT = 1e12
EIGEN_REL_TOL = 1e-12
SIGMA2_FLOOR = 1e-10


@dataclass(frozen=True)
class LogResiduals:
    subject_ids: tuple[str, ...]
    times: tuple[np.ndarray, ...]
    vectors: tuple[np.ndarray, ...]

    @property
    def counts(self) -> np.ndarray:
        return np.array([t.size for t in self.times], dtype=int)

    @property
    def ambient_dim(self) -> int:
        return int(self.vectors[0].shape[1])

    def __len__(self) -> int:
        return len(self.subject_ids)


def log_residuals(data: LongitudinalDataset, curve: MeanCurve) -> LogResiduals:
    """L_ij = Log_{mu(T_ij)} Y_ij, kept per subject in time order."""
    m = data.manifold
    vectors = []
    for i, s in enumerate(data.subjects):
        base = eval_mean(curve, s.times)
        try:
            vectors.append(m.log_map(base, s.points))
        except CutLocusError:
            for j in range(s.m):
                try:
                    m.log_map(base[j], s.points[j])
                except CutLocusError:
                    raise CutLocusError(
                        f"observation (subject={s.id!r}, i={i}, j={j}, t={s.times[j]:g}) is in the cut locus of the mean"
                    ) from None
            raise
    return LogResiduals(tuple(data.ids), tuple(s.times for s in data.subjects), tuple(vectors))


@dataclass(frozen=True)
class RawCovariances:
    """Off-diagonal products L_ij L_il^T (j != l), flattened to D*D columns."""

    s: np.ndarray
    t: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    ambient_dim: int


def raw_covariances(residuals: LogResiduals, v: Sequence[float]) -> RawCovariances:
    v = np.asarray(v, dtype=float)
    if v.shape != (len(residuals),):
        raise InvalidInputError(f"expected {len(residuals)} covariance weights, got shape {v.shape}")
    D = residuals.ambient_dim
    s_parts, t_parts, val_parts, w_parts = [], [], [], []
    for i, (times, vecs) in enumerate(zip(residuals.times, residuals.vectors)):
        m = times.size
        if m < 2 or v[i] == 0.0:
            continue
        j, l = np.nonzero(~np.eye(m, dtype=bool))
        s_parts.append(times[j])
        t_parts.append(times[l])
        val_parts.append((vecs[j, :, None] * vecs[l, None, :]).reshape(-1, D * D))
        w_parts.append(np.full(j.size, v[i]))
    if not s_parts:
        return RawCovariances(np.empty(0), np.empty(0), np.empty((0, D * D)), np.empty(0), D)
    return RawCovariances(
        np.concatenate(s_parts), np.concatenate(t_parts), np.concatenate(val_parts), np.concatenate(w_parts), D
    )


def _local_plane(
    raw: RawCovariances, s_pts: np.ndarray, t_pts: np.ndarray, h: float, kernel: KernelSpec = EPANECHNIKOV
) -> np.ndarray:
    """Local-plane intercepts at every (s, t) in s_pts x t_pts, shape (S, T, D, D).

    The product-kernel weights are shared by all D*D entries, so one 3x3 normal system per
    point serves every entry. Regressors are scaled by h.
    """
    D = raw.ambient_dim
    xs = (raw.s[None, :] - s_pts[:, None]) / h
    yt = (raw.t[None, :] - t_pts[:, None]) / h
    u0 = raw.weights[None, :] * kernel(xs)
    u1, u2 = u0 * xs, u0 * xs * xs
    v0 = kernel(yt)
    v1, v2 = v0 * yt, v0 * yt * yt

    s00, s10, s20 = u0 @ v0.T, u1 @ v0.T, u2 @ v0.T
    s01, s11, s02 = u0 @ v1.T, u1 @ v1.T, u0 @ v2.T
    lhs = np.stack(
        [np.stack([s00, s10, s01], -1), np.stack([s10, s20, s11], -1), np.stack([s01, s11, s02], -1)], -2
    )
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(lhs)
    bad = ~np.isfinite(cond) | (cond > COND_LIMIT)
    if bad.any():
        a, b = np.nonzero(bad)
        where = ", ".join(f"({s_pts[x]:g}, {t_pts[y]:g})" for x, y in zip(a[:5], b[:5]))
        raise BandwidthTooSmallError(
            f"rank-deficient local plane fit at {bad.sum()} point(s) with h_cov={h:g}: {where}"
        )

    rhs = np.empty((s_pts.size, t_pts.size, 3, D * D))
    for a in range(s_pts.size):
        active = np.flatnonzero(u0[a])
        vals = raw.values[active]
        rhs[a, :, 0] = v0[:, active] @ (u0[a, active, None] * vals)
        rhs[a, :, 1] = v0[:, active] @ (u1[a, active, None] * vals)
        rhs[a, :, 2] = v1[:, active] @ (u0[a, active, None] * vals)
    beta = np.linalg.solve(lhs, rhs)
    return beta[:, :, 0, :].reshape(s_pts.size, t_pts.size, D, D)


def smooth_covariance_at(s: float, t: float, h: float, residuals: LogResiduals, v: Sequence[float]) -> np.ndarray:
    raw = raw_covariances(residuals, v)
    return _local_plane(raw, np.array([float(s)]), np.array([float(t)]), float(h))[0, 0]


def symmetrize(surface: np.ndarray) -> np.ndarray:
    return 0.5 * (surface + surface.transpose(1, 0, 3, 2))


def covariance_surface(residuals: LogResiduals, h: float, v: Sequence[float], grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    raw = raw_covariances(residuals, v)
    logger.info("smoothing %d raw covariance pairs on a %dx%d grid (h_cov=%.6g)", raw.s.size, grid.size, grid.size, h)
    return symmetrize(_local_plane(raw, grid, grid, float(h)))


def project_surface(surface: np.ndarray, projectors: np.ndarray) -> np.ndarray:
    """P(s) G(s, t) P(t) with one (D, D) tangent projector per grid node."""
    return np.einsum("aij,abjk,bkl->abil", projectors, surface, projectors)


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    d = np.diff(grid)
    w = np.zeros(grid.size)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def eigendecompose(surface: np.ndarray, quadrature: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of the covariance operator; eigenfunctions returned with shape (K, G, D)."""
    G, _, D, _ = surface.shape
    block = surface.transpose(0, 2, 1, 3).reshape(G * D, G * D)
    scale = max(float(np.max(np.abs(block))), np.finfo(float).tiny)
    if np.max(np.abs(block - block.T)) > 1e-10 * scale:
        raise InvariantViolation("covariance surface is not symmetric")
    root = np.sqrt(np.repeat(np.asarray(quadrature, dtype=float), D))
    op = root[:, None] * block * root[None, :]
    vals, vecs = np.linalg.eigh(0.5 * (op + op.T))
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    keep = vals > max(0.0, EIGEN_REL_TOL * (vals[0] if vals.size else 0.0))
    vals, vecs = vals[keep], vecs[:, keep]
    funcs = (vecs / root[:, None]).T.reshape(-1, G, D)
    for k in range(funcs.shape[0]):
        flat = funcs[k].reshape(-1)
        if flat[np.argmax(np.abs(flat))] < 0:
            funcs[k] = -funcs[k]
    return vals, funcs


def fve(eigenvalues: Sequence[float]) -> np.ndarray:
    lam = np.asarray(eigenvalues, dtype=float)
    return np.cumsum(lam) / np.sum(lam)


@dataclass(frozen=True)
class TruncationRule:
    fve_threshold: float | None = 0.95
    n_components: int | None = None

    def __post_init__(self) -> None:
        if (self.fve_threshold is None) == (self.n_components is None):
            raise InvalidInputError("truncation needs exactly one of fve_threshold or n_components")
        if self.fve_threshold is not None and not 0.0 < self.fve_threshold < 1.0:
            raise InvalidInputError(f"FVE threshold must lie in (0, 1), got {self.fve_threshold}")
        if self.n_components is not None and self.n_components < 1:
            raise InvalidInputError(f"n_components must be >= 1, got {self.n_components}")


def select_K(eigenvalues: Sequence[float], rule: TruncationRule) -> int:
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size == 0:
        raise InvalidInputError("select_K needs at least one eigenvalue")
    if rule.n_components is not None:
        return int(min(rule.n_components, lam.size))
    if not lam.sum() > 0:
        return 1
    ratios = fve(lam)
    return int(min(np.searchsorted(ratios, rule.fve_threshold - 1e-12) + 1, lam.size))


def trace_at(surface: np.ndarray, grid: np.ndarray, times) -> np.ndarray:
    """Bilinear interpolation of Tr G(t, t) at arbitrary times."""
    tr = np.trace(surface, axis1=2, axis2=3)
    interp = RegularGridInterpolator((grid, grid), tr, method="linear", bounds_error=False, fill_value=None)
    t = np.asarray(times, dtype=float)
    return interp(np.column_stack([t, t]))


@dataclass(frozen=True)
class Sigma2Estimate:
    value: float
    raw: float

    @property
    def floored(self) -> bool:
        return self.raw < SIGMA2_FLOOR


def estimate_sigma2(residuals: LogResiduals, surface: np.ndarray, grid: np.ndarray, intrinsic_dim: int) -> Sigma2Estimate:
    """sigma^2 = sum_i sum_j (n d m_i)^-1 (|L_ij|^2 - Tr G(T_ij, T_ij)), floored at 1e-10."""
    n = len(residuals)
    total = 0.0
    for times, vecs in zip(residuals.times, residuals.vectors):
        diag = trace_at(surface, grid, times)
        total += float(np.sum(np.sum(vecs * vecs, axis=1) - diag)) / (n * intrinsic_dim * times.size)
    if total < SIGMA2_FLOOR:
        logger.warning("sigma^2 estimate %.3g below floor; using %.1e", total, SIGMA2_FLOOR)
    return Sigma2Estimate(max(total, SIGMA2_FLOOR), total)


def interpolate_grid(grid: np.ndarray, values: np.ndarray, times) -> np.ndarray:
    """Piecewise-linear interpolation along axis 0 of `values` (clamped at the ends)."""
    t = np.clip(np.atleast_1d(np.asarray(times, dtype=float)), grid[0], grid[-1])
    idx = np.clip(np.searchsorted(grid, t, side="right") - 1, 0, grid.size - 2)
    frac = (t - grid[idx]) / (grid[idx + 1] - grid[idx])
    frac = frac.reshape((-1,) + (1,) * (values.ndim - 1))
    return (1.0 - frac) * values[idx] + frac * values[idx + 1]


@dataclass(frozen=True)
class CovarianceModel:
    grid: np.ndarray
    surface: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    sigma2: float
    quadrature: np.ndarray
    bandwidth: float
    sigma2_floored: bool = False
    degenerate: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_available(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def fve(self) -> np.ndarray:
        return fve(self.eigenvalues) if self.eigenvalues.sum() > 0 else np.ones_like(self.eigenvalues)

    def eigenfunctions_at(self, times) -> np.ndarray:
        """phi_k at arbitrary times, shape (K, m, D)."""
        vals = interpolate_grid(self.grid, self.eigenfunctions.transpose(1, 0, 2), times)
        return vals.transpose(1, 0, 2)

    def diagonal(self) -> np.ndarray:
        idx = np.arange(self.grid.size)
        return self.surface[idx, idx]
