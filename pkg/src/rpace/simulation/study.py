from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

import rpace
from rpace.core.errors import InvalidInputError, RpaceError, StudyFailedError
from rpace.data.dataset import LongitudinalDataset
from rpace.estimation.covariance import TruncationRule, trapezoid_weights
from rpace.estimation.pace import FitConfig, FitResult, fit
from rpace.geometry import Euclidean, Manifold
from rpace.simulation.scenarios import ScenarioConfig, generate

logger = logging.getLogger(__name__)

MAX_FAILURE_RATE = 0.05
METHODS = ("rpace", "extrinsic")


def integrated_errors(
    fits: np.ndarray,
    truths: np.ndarray,
    grid: np.ndarray,
    manifold: Manifold,
    *,
    normalizer: float | None = None,
    distance_scale: float = 1.0,
) -> np.ndarray:
    """Per-replicate (1/D) int d^2(X_hat, X) dt, averaged over the subjects of a replicate.

    `fits` and `truths` have shape (B, n, G, D) or (B, G, D).
    """
    fits = np.asarray(fits, dtype=float)
    truths = np.asarray(truths, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if fits.shape != truths.shape or fits.shape[-2] != grid.size:
        raise InvalidInputError(f"grid mismatch: fits {fits.shape}, truths {truths.shape}, grid {grid.size}")
    D = float(normalizer if normalizer is not None else manifold.ambient_dim)
    sq = (distance_scale * manifold.dist(fits, truths)) ** 2
    integral = sq @ trapezoid_weights(grid) / D
    return integral.reshape(fits.shape[0], -1).mean(axis=1)


def rmise(
    fits: np.ndarray,
    truths: np.ndarray,
    grid: np.ndarray,
    manifold: Manifold,
    *,
    normalizer: float | None = None,
    distance_scale: float = 1.0,
) -> float:
    """sqrt((1/B) sum_b (1/D) int d^2(X_hat_b, X_b) dt) with trapezoid quadrature."""
    per = integrated_errors(fits, truths, grid, manifold, normalizer=normalizer, distance_scale=distance_scale)
    return float(np.sqrt(per.mean()))


def extrinsic_baseline(data: LongitudinalDataset, config: FitConfig | None = None) -> FitResult:
    """Multivariate PACE on ambient coordinates, reconstructions projected back to the manifold."""
    target = data.manifold
    config = config or FitConfig()
    flat = fit(data.with_manifold(Euclidean(target.ambient_dim)), config)
    return replace(
        flat,
        method="extrinsic",
        trajectories=target.project(flat.trajectories),
        projection=target,
    )


@dataclass(frozen=True)
class StudyRow:
    method: str
    manifold: str
    scenario: str
    K: int
    rmise: float
    mc_se: float
    n_fail: int

    def as_tuple(self) -> tuple:
        return (self.method, self.manifold, self.scenario, self.K, self.rmise, self.mc_se, self.n_fail)


STUDY_COLUMNS = ("method", "manifold", "scenario", "K", "rmise", "mc_se", "n_fail")


@dataclass(frozen=True)
class StudyResult:
    rows: tuple[StudyRow, ...]
    metadata: dict = field(default_factory=dict)

    def cell(self, method: str, K: int) -> StudyRow:
        for r in self.rows:
            if r.method == method and r.K == K:
                return r
        raise KeyError((method, K))


def study_fit_config(k_max: int, grid_size: int = 51) -> FitConfig:
    return FitConfig(truncation=TruncationRule(fve_threshold=None, n_components=k_max), grid_size=grid_size, grid_span=(0.0, 1.0))


def _distance_setup(config: ScenarioConfig, manifold: Manifold) -> tuple[float, float]:
    normalizer = manifold.ambient_dim if config.rmise_normalization == "ambient" else manifold.dim
    scale = 1.0 / np.sqrt(2.0) if (config.manifold == "SO3" and config.so3_distance == "angle") else 1.0
    return float(normalizer), float(scale)


def run_replicate(
    config: ScenarioConfig,
    seed_seq: np.random.SeedSequence,
    k_values: Sequence[int],
    fit_config: FitConfig,
) -> dict[str, object]:
    """Integrated errors per method and K for one replicate, or the failure message."""
    rng = np.random.default_rng(seed_seq)
    grid = np.linspace(0.0, 1.0, fit_config.grid_size)
    data, truth = generate(config, rng, grid)
    normalizer, scale = _distance_setup(config, data.manifold)
    out: dict[str, object] = {}
    for method, runner in (("rpace", fit), ("extrinsic", extrinsic_baseline)):
        try:
            result = runner(data, fit_config)
            ests = {int(K): result.trajectories_for(K) for K in k_values}
        except RpaceError as exc:
            out[method] = f"{exc.describe()}"
            continue
        out[method] = {
            K: float(integrated_errors(est[None], truth.trajectories[None], grid, data.manifold, normalizer=normalizer, distance_scale=scale)[0])
            for K, est in ests.items()
        }
        out[f"{method}_sigma2"] = float(result.model.sigma2)
        out[f"{method}_h_mu"] = float(result.bandwidth_mean)
    return out


def _run(args: tuple) -> dict[str, object]:
    return run_replicate(*args)


def run_study(
    config: ScenarioConfig,
    k_values: Iterable[int] = range(1, 7),
    *,
    workers: int = 1,
    grid_size: int = 51,
) -> StudyResult:
    k_values = [int(k) for k in k_values]
    if not k_values or min(k_values) < 1:
        raise InvalidInputError("K range must be nonempty and start at 1 or above")
    fit_config = study_fit_config(max(k_values), grid_size)
    children = np.random.SeedSequence(config.seed).spawn(config.replicates)
    jobs = [(config, child, k_values, fit_config) for child in children]
    started = time.perf_counter()
    logger.info("study %s/%s: %d replicates, workers=%d", config.name, config.manifold, config.replicates, workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run, jobs))
    else:
        results = [_run(job) for job in jobs]

    rows: list[StudyRow] = []
    failures: dict[str, list[str]] = {}
    for method in METHODS:
        ok = [r[method] for r in results if isinstance(r[method], dict)]
        failures[method] = [r[method] for r in results if not isinstance(r[method], dict)]
        n_fail = len(failures[method])
        for K in k_values:
            per = np.array([e[K] for e in ok])
            if per.size == 0:
                rows.append(StudyRow(method, config.manifold, config.name, K, float("nan"), float("nan"), n_fail))
                continue
            value = float(np.sqrt(per.mean()))
            se_mise = float(per.std(ddof=1) / np.sqrt(per.size)) if per.size > 1 else 0.0
            se = se_mise / (2.0 * value) if value > 0 else 0.0
            rows.append(StudyRow(method, config.manifold, config.name, K, value, se, n_fail))

    sigma2 = [r["rpace_sigma2"] for r in results if "rpace_sigma2" in r]
    metadata = {
        "seed": config.seed,
        "scenario": config.as_dict(),
        "k_values": k_values,
        "grid_size": grid_size,
        "version": rpace.version,
        "failures": failures,
        "rpace_sigma2": sigma2,
    }
    logger.info("study finished in %.1fs", time.perf_counter() - started)
    result = StudyResult(tuple(rows), metadata)
    for method, msgs in failures.items():
        if len(msgs) > MAX_FAILURE_RATE * config.replicates:
            raise StudyFailedError(
                f"{method}: {len(msgs)} of {config.replicates} replicates failed (first: {msgs[0]})"
            )
    return result
