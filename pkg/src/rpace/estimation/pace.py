from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from rpace.core.errors import ConditioningError, InvalidInputError, stage
from rpace.data.dataset import LongitudinalDataset
from rpace.estimation.covariance import (
    CovarianceModel,
    LogResiduals,
    TruncationRule,
    covariance_surface,
    eigendecompose,
    estimate_sigma2,
    log_residuals,
    project_surface,
    select_K,
    trapezoid_weights,
)
from rpace.estimation.mean import DEFAULT_GRID_SIZE, MeanCurve, estimate_mean_curve, working_grid
from rpace.estimation.smoothing import GcvResult, WeightScheme, cov_weights, gcv_bandwidth, mean_weights
from rpace.geometry import Manifold

logger = logging.getLogger(__name__)

CLAMP_MARGIN = 1e-6


@dataclass(frozen=True)
class ScoreSet:
    subject_ids: tuple[str, ...]
    scores: np.ndarray
    design_sizes: np.ndarray

    @property
    def n_components(self) -> int:
        return int(self.scores.shape[1])


def conditional_covariance(times: np.ndarray, model: CovarianceModel) -> tuple[np.ndarray, np.ndarray]:
    """Sigma_L = Phi Lambda Phi^T + sigma^2 I over the stacked (m*D) coordinates, plus Phi.

    Phi has one column per retained eigenpair; rows follow the time-ordered concatenation of
    the m D-vectors.
    """
    phi = model.eigenfunctions_at(times)
    stacked = phi.reshape(phi.shape[0], -1).T
    sigma = (stacked * model.eigenvalues[None, :]) @ stacked.T
    sigma = 0.5 * (sigma + sigma.T) + model.sigma2 * np.eye(stacked.shape[0])
    return sigma, stacked


def blup_scores(
    times: np.ndarray, residuals: np.ndarray, model: CovarianceModel, K: int, subject_id: str = ""
) -> np.ndarray:
    """xi_k = lambda_k phi_k^T Sigma_L^-1 L for k < K via a Cholesky solve."""
    if K > model.n_available:
        raise InvalidInputError(f"K={K} exceeds the {model.n_available} available eigenpairs")
    sigma, stacked = conditional_covariance(np.asarray(times, dtype=float), model)
    rhs = np.asarray(residuals, dtype=float).reshape(-1)
    try:
        factor = cho_factor(sigma, lower=True, check_finite=True)
        solved = cho_solve(factor, rhs)
    except (LinAlgError, ValueError):
        cond = float(np.linalg.cond(sigma))
        raise ConditioningError(
            f"conditional covariance of subject {subject_id!r} is not positive definite (cond={cond:.3g})",
            subject_id,
            cond,
        ) from None
    if not np.all(np.isfinite(solved)):
        cond = float(np.linalg.cond(sigma))
        raise ConditioningError(f"non-finite BLUP solve for subject {subject_id!r} (cond={cond:.3g})", subject_id, cond)
    return model.eigenvalues[:K] * (stacked[:, :K].T @ solved)


def estimate_scores(residuals: LogResiduals, model: CovarianceModel, K: int) -> ScoreSet:
    scores = np.empty((len(residuals), K))
    for i, (sid, times, vecs) in enumerate(zip(residuals.subject_ids, residuals.times, residuals.vectors)):
        scores[i] = blup_scores(times, vecs, model, K, subject_id=sid)
    sizes = residuals.counts * residuals.ambient_dim
    return ScoreSet(tuple(residuals.subject_ids), scores, sizes)


@dataclass(frozen=True)
class Reconstruction:
    log_trajectory: np.ndarray
    trajectory: np.ndarray
    clamped: np.ndarray


def reconstruct(
    scores: np.ndarray,
    model: CovarianceModel,
    curve: MeanCurve,
    K: int,
    *,
    tangent_projection: bool = True,
) -> Reconstruction:
    """L_K(t) = sum_k xi_k phi_k(t), X_K(t) = Exp_{mu(t)} L_K(t) on the model grid."""
    if K > model.n_available:
        raise InvalidInputError(f"K={K} exceeds the {model.n_available} available eigenpairs")
    m = curve.manifold
    xi = np.asarray(scores, dtype=float)[:K]
    log_traj = np.tensordot(xi, model.eigenfunctions[:K], axes=(0, 0))
    if tangent_projection and not m.is_flat:
        log_traj = m.to_tangent(curve.points, log_traj)
    norms = np.linalg.norm(log_traj, axis=1)
    limit = m.injectivity_radius - CLAMP_MARGIN
    clamped = norms > limit
    if clamped.any():
        logger.warning("clamping %d reconstructed tangent vector(s) to the injectivity radius", int(clamped.sum()))
        log_traj = log_traj.copy()
        log_traj[clamped] *= (limit / norms[clamped])[:, None]
    traj = m.exp_map(curve.points, log_traj)
    if not xi.any():
        traj = np.array(curve.points, copy=True)
    return Reconstruction(log_traj, traj, clamped)


@dataclass(frozen=True)
class FitConfig:
    scheme: WeightScheme = WeightScheme.OBS
    truncation: TruncationRule = field(default_factory=TruncationRule)
    bandwidth_mean: float | None = None
    bandwidth_cov: float | None = None
    cov_bandwidth_factor: float = 2.0
    grid_size: int = DEFAULT_GRID_SIZE
    grid_span: tuple[float, float] | None = None
    gcv_candidates: int = 10
    tangent_projection: bool = True
    max_iter: int = 200

    def describe(self) -> dict[str, object]:
        return {
            "scheme": self.scheme.value,
            "fve_threshold": self.truncation.fve_threshold,
            "n_components": self.truncation.n_components,
            "bandwidth_mean": self.bandwidth_mean,
            "bandwidth_cov": self.bandwidth_cov,
            "cov_bandwidth_factor": self.cov_bandwidth_factor,
            "grid_size": self.grid_size,
            "grid_span": list(self.grid_span) if self.grid_span else None,
            "gcv_candidates": self.gcv_candidates,
            "tangent_projection": self.tangent_projection,
            "max_iter": self.max_iter,
        }


@dataclass(frozen=True)
class FitResult:
    method: str
    curve: MeanCurve
    model: CovarianceModel
    scores: ScoreSet
    log_trajectories: np.ndarray
    trajectories: np.ndarray
    clamped: np.ndarray
    n_components: int
    bandwidth_mean: float
    bandwidth_cov: float
    gcv: GcvResult | None
    config: FitConfig
    projection: Manifold | None = None

    @property
    def manifold(self) -> Manifold:
        return self.projection or self.curve.manifold

    @property
    def subject_ids(self) -> tuple[str, ...]:
        return self.scores.subject_ids

    def trajectories_for(self, K: int) -> np.ndarray:
        """Reconstructions with the first K scores (scores do not depend on K)."""
        K = int(min(K, self.scores.n_components, self.model.n_available))
        out = np.stack(
            [
                reconstruct(xi, self.model, self.curve, K, tangent_projection=self.config.tangent_projection).trajectory
                for xi in self.scores.scores
            ]
        )
        if self.projection is not None:
            out = self.projection.project(out)
        return out


def _pad_empty(vals: np.ndarray, funcs: np.ndarray, G: int, D: int) -> tuple[np.ndarray, np.ndarray, bool]:
    if vals.size:
        return vals, funcs, False
    logger.warning("no positive eigenvalues; using a single zero component")
    return np.zeros(1), np.zeros((1, G, D)), True


def fit(data: LongitudinalDataset, config: FitConfig | None = None) -> FitResult:
    config = config or FitConfig()
    manifold = data.manifold
    scheme = WeightScheme.parse(config.scheme)
    grid = working_grid(data, config.grid_size, config.grid_span)
    logger.info(
        "fit start: %s, n=%d, N=%d, scheme=%s", manifold.name, data.n_subjects, data.n_obs, scheme.value
    )

    gcv = None
    with stage("bandwidth"):
        if config.bandwidth_mean is None:
            gcv = gcv_bandwidth(data, scheme, grid=grid, count=config.gcv_candidates, max_iter=config.max_iter)
            h_mu = gcv.bandwidth
        else:
            h_mu = float(config.bandwidth_mean)
        h_cov = float(config.bandwidth_cov) if config.bandwidth_cov is not None else config.cov_bandwidth_factor * h_mu

    with stage("mean"):
        w = mean_weights(scheme, data.counts, h_mu)
        curve = replace(estimate_mean_curve(data, h_mu, w, grid, max_iter=config.max_iter), scheme=scheme)

    with stage("residuals"):
        residuals = log_residuals(data, curve)

    with stage("covariance"):
        v = cov_weights(scheme, data.counts, h_cov)
        surface = covariance_surface(residuals, h_cov, v, grid)
        if config.tangent_projection and not manifold.is_flat:
            projectors = np.stack([manifold.tangent_projector(p) for p in curve.points])
            surface = project_surface(surface, projectors)

    with stage("eigen"):
        quad = trapezoid_weights(grid)
        vals, funcs = eigendecompose(surface, quad)
        vals, funcs, degenerate = _pad_empty(vals, funcs, grid.size, manifold.ambient_dim)

    with stage("sigma2"):
        sigma2 = estimate_sigma2(residuals, surface, grid, manifold.dim)

    model = CovarianceModel(
        grid=grid,
        surface=surface,
        eigenvalues=vals,
        eigenfunctions=funcs,
        sigma2=sigma2.value,
        quadrature=quad,
        bandwidth=h_cov,
        sigma2_floored=sigma2.floored,
        degenerate=degenerate,
    )
    K = select_K(vals, config.truncation)
    logger.info("h_mu=%.6g h_cov=%.6g K=%d sigma2=%.6g", h_mu, h_cov, K, model.sigma2)

    with stage("scores"):
        scores = estimate_scores(residuals, model, K)

    with stage("reconstruct"):
        recs = [reconstruct(xi, model, curve, K, tangent_projection=config.tangent_projection) for xi in scores.scores]

    return FitResult(
        method="rpace",
        curve=curve,
        model=model,
        scores=scores,
        log_trajectories=np.stack([r.log_trajectory for r in recs]),
        trajectories=np.stack([r.trajectory for r in recs]),
        clamped=np.stack([r.clamped for r in recs]),
        n_components=K,
        bandwidth_mean=h_mu,
        bandwidth_cov=h_cov,
        gcv=gcv,
        config=config,
    )
