from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from rpace.core.errors import (
    BandwidthSelectionError,
    BandwidthTooSmallError,
    CovarianceUnidentifiableError,
    InvalidInputError,
    RpaceError,
)
from rpace.data.dataset import LongitudinalDataset

logger = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    family: str = "epanechnikov"

    def __post_init__(self) -> None:
        if self.family != "epanechnikov":
            raise InvalidInputError(f"unsupported kernel family {self.family!r}")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) <= 1.0, 0.75 * (1.0 - x * x), 0.0)

    def scaled(self, x, h: float) -> np.ndarray:
        """K_h(x) = K(x/h)/h."""
        return self(np.asarray(x, dtype=float) / h) / h


EPANECHNIKOV = KernelSpec()


class WeightScheme(str, Enum):
    OBS = "OBS"
    SUBJ = "SUBJ"
    INTM = "INTM"

    @classmethod
    def parse(cls, value: "str | WeightScheme") -> "WeightScheme":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise InvalidInputError(f"unknown weight scheme {value!r}; expected OBS, SUBJ or INTM") from None


def _counts(counts: Sequence[int]) -> np.ndarray:
    m = np.asarray(counts, dtype=float).reshape(-1)
    if m.size == 0:
        raise InvalidInputError("weights need a nonempty count vector")
    if np.any(m < 1):
        raise InvalidInputError("every subject needs at least one observation")
    return m


def _check_bandwidth(h: float) -> float:
    h = float(h)
    if not np.isfinite(h) or h <= 0:
        raise InvalidInputError(f"bandwidth must be positive, got {h}")
    return h


def mean_weights(scheme: WeightScheme | str, counts: Sequence[int], h: float) -> np.ndarray:
    scheme = WeightScheme.parse(scheme)
    m = _counts(counts)
    h = _check_bandwidth(h)
    n = m.size
    m_bar = m.mean()
    obs = np.full(n, 1.0 / (n * m_bar))
    subj = 1.0 / (n * m)
    if scheme is WeightScheme.OBS:
        return obs
    if scheme is WeightScheme.SUBJ:
        return subj
    m2 = np.mean(m**2)
    m_harm = n / np.sum(1.0 / m)
    c1 = 1.0 / (m_bar * h) + m2 / m_bar**2
    c2 = 1.0 / (m_harm * h) + 1.0
    alpha = c2 / (c1 + c2)
    return alpha * obs + (1.0 - alpha) * subj


def cov_weights(scheme: WeightScheme | str, counts: Sequence[int], h: float) -> np.ndarray:
    """Per-subject covariance weights; subjects with a single observation get weight 0."""
    scheme = WeightScheme.parse(scheme)
    m = _counts(counts)
    h = _check_bandwidth(h)
    pairs = m * (m - 1.0)
    eligible = m >= 2
    if not eligible.any():
        raise CovarianceUnidentifiableError("no subject has two or more observations")
    obs = np.where(eligible, 1.0 / pairs.sum(), 0.0)
    n_eff = int(eligible.sum())
    subj = np.zeros_like(m)
    subj[eligible] = 1.0 / (n_eff * pairs[eligible])
    if scheme is WeightScheme.OBS:
        return obs
    if scheme is WeightScheme.SUBJ:
        return subj
    n = m.size
    m2, m3, m4 = (np.mean(m**k) for k in (2, 3, 4))
    m_harm = n / np.sum(1.0 / m)
    m_quad = n / np.sum(m**-2.0)
    c1 = 1.0 / (m2 * h**2) + m3 / (m2**2 * h) + m4 / m2**2
    c2 = 1.0 / (m_quad * h**2) + 1.0 / (m_harm * h) + 1.0
    alpha = c2 / (c1 + c2)
    return alpha * obs + (1.0 - alpha) * subj


@dataclass(frozen=True)
class LocalMoments:
    t: float
    u0: float
    u1: float
    u2: float

    @property
    def sigma0sq(self) -> float:
        return self.u0 * self.u2 - self.u1 * self.u1

    @property
    def degenerate(self) -> bool:
        return self.sigma0sq <= DEGENERACY_TOL * self.u0 * self.u2

    def require(self, h: float | None = None) -> "LocalMoments":
        if self.degenerate:
            at = f" with h={h:g}" if h is not None else ""
            raise BandwidthTooSmallError(f"degenerate local moments at t={self.t:g}{at}")
        return self


def moments_from(
    t: float, h: float, times: np.ndarray, obs_weights: np.ndarray, kernel: KernelSpec = EPANECHNIKOV
) -> LocalMoments:
    x = np.asarray(times, dtype=float) - t
    kw = obs_weights * kernel.scaled(x, h)
    return LocalMoments(float(t), float(kw.sum()), float(kw @ x), float(kw @ (x * x)))


def local_moments(
    t: float, h: float, data: LongitudinalDataset, w: Sequence[float], kernel: KernelSpec = EPANECHNIKOV
) -> LocalMoments:
    """Empirical moments u_k(t) = sum_i w_i sum_j K_h(T_ij - t)(T_ij - t)^k, k = 0, 1, 2."""
    h = _check_bandwidth(h)
    pooled = data.pooled()
    obs_w = np.asarray(w, dtype=float)[pooled.subject]
    return moments_from(t, h, pooled.times, obs_w, kernel)


def local_weight(T, t: float, h: float, moments: LocalMoments, kernel: KernelSpec = EPANECHNIKOV) -> np.ndarray:
    """omega(T, t) = K_h(T - t){u2 - u1 (T - t)} / sigma0^2; vectorized over T."""
    moments.require(h)
    x = np.asarray(T, dtype=float) - t
    return kernel.scaled(x, h) * (moments.u2 - moments.u1 * x) / moments.sigma0sq


def bandwidth_candidates(times: np.ndarray, count: int = 10) -> np.ndarray:
    """Log-spaced grid from 1.5 x (largest gap between pooled times) to range/2."""
    uniq = np.unique(np.asarray(times, dtype=float))
    if uniq.size < 2:
        raise BandwidthSelectionError("need at least two distinct observation times")
    low = 1.5 * float(np.max(np.diff(uniq)))
    high = 0.5 * float(uniq[-1] - uniq[0])
    if low >= high:
        return np.array([max(low, high)])
    return np.geomspace(low, high, int(count))


@dataclass(frozen=True)
class GcvResult:
    bandwidth: float
    candidates: np.ndarray
    scores: np.ndarray

    def rows(self) -> list[tuple[float, float]]:
        return [(float(h), float(s)) for h, s in zip(self.candidates, self.scores)]


def gcv_score(sq_error_sum: float, h: float, n_obs: int, kernel: KernelSpec = EPANECHNIKOV) -> float:
    return float(sq_error_sum / (1.0 - float(kernel.scaled(0.0, h)) / n_obs) ** 2)


def gcv_bandwidth(
    data: LongitudinalDataset,
    scheme: WeightScheme | str = WeightScheme.OBS,
    candidates: Sequence[float] | None = None,
    *,
    grid: np.ndarray | None = None,
    count: int = 10,
    max_iter: int = 200,
) -> GcvResult:
    """Pick h_mu minimizing GCV(h) = sum d^2(mu_h(T_ij), Y_ij) / (1 - K_h(0)/N)^2.

    The mean is refit at the exact observation times for every candidate. Ties go to the
    larger bandwidth.
    """
    from rpace.estimation.mean import estimate_mean_path, working_grid

    scheme = WeightScheme.parse(scheme)
    pooled = data.pooled()
    cand = np.sort(np.asarray(candidates if candidates is not None else bandwidth_candidates(pooled.times, count), dtype=float))
    if cand.size == 0:
        raise BandwidthSelectionError("empty bandwidth candidate grid")
    grid = working_grid(data) if grid is None else np.asarray(grid, dtype=float)
    uniq, inverse = np.unique(pooled.times, return_inverse=True)
    manifold = data.manifold
    scores = np.full(cand.size, np.inf)

    for k, h in enumerate(cand):
        w = mean_weights(scheme, data.counts, h)
        obs_w = w[pooled.subject]
        try:
            for t in grid:
                moments_from(t, h, pooled.times, obs_w).require(h)
            fitted = estimate_mean_path(data, h, w, uniq, max_iter=max_iter)
        except RpaceError as exc:
            logger.warning("GCV candidate h=%.6g skipped: %s", h, exc)
            continue
        sq = manifold.dist(fitted[inverse], pooled.points) ** 2
        scores[k] = gcv_score(float(np.sum(sq)), h, pooled.n_obs)
        logger.debug("GCV h=%.6g score=%.6g", h, scores[k])

    finite = np.isfinite(scores)
    if not finite.any():
        raise BandwidthSelectionError(f"all {cand.size} bandwidth candidates are degenerate")
    best = float(np.min(scores[finite]))
    ties = np.flatnonzero(finite & (scores <= best + 1e-12 * max(1.0, abs(best))))
    chosen = float(cand[ties[-1]])
    logger.info("GCV selected h_mu=%.6g among %d candidates", chosen, cand.size)
    return GcvResult(chosen, cand, scores)
