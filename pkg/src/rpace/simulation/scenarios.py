from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Literal

import numpy as np
from scipy.linalg import expm

from rpace.core.errors import InvalidInputError
from rpace.data.dataset import LongitudinalDataset, Subject
from rpace.geometry import Manifold, SpecialOrthogonal3, Sphere, iota, rotation_between

NORTH_POLE = np.array([0.0, 0.0, 1.0])

# (n, m_max) per preset scenario
SCENARIOS: dict[int, tuple[int, int]] = {1: (100, 20), 2: (100, 5), 3: (50, 20)}


@dataclass(frozen=True)
class ScenarioConfig:
    manifold: Literal["S2", "SO3"] = "S2"
    n: int = 100
    m_max: int = 20
    decay_base: float = 0.05
    sigma2: float = 0.01
    n_components: int = 20
    replicates: int = 200
    seed: int = 0
    name: str = "scenario-1"
    score_scale: float = 1.0
    rmise_normalization: Literal["ambient", "intrinsic"] = "ambient"
    so3_distance: Literal["frobenius", "angle"] = "frobenius"

    def __post_init__(self) -> None:
        if self.manifold not in ("S2", "SO3"):
            raise InvalidInputError(f"scenario manifold must be S2 or SO3, got {self.manifold!r}")
        if self.n < 2 or self.m_max < 1:
            raise InvalidInputError(f"need n >= 2 and m_max >= 1, got n={self.n}, m_max={self.m_max}")
        if self.sigma2 < 0 or self.n_components < 1 or self.replicates < 1:
            raise InvalidInputError("sigma2 must be >= 0; n_components and replicates >= 1")
        if self.rmise_normalization not in ("ambient", "intrinsic"):
            raise InvalidInputError(f"unknown rmise normalization {self.rmise_normalization!r}")
        if self.so3_distance not in ("frobenius", "angle"):
            raise InvalidInputError(f"unknown so3 distance {self.so3_distance!r}")

    @property
    def eigenvalues(self) -> np.ndarray:
        k = np.arange(1, self.n_components + 1)
        return self.decay_base ** (k / 3.0)

    def geometry(self) -> Manifold:
        return Sphere(2) if self.manifold == "S2" else SpecialOrthogonal3()

    def as_dict(self) -> dict[str, object]:
        return asdict(self)


def scenario_config(number: int, manifold: str = "S2", **overrides) -> ScenarioConfig:
    if number not in SCENARIOS:
        raise InvalidInputError(f"unknown scenario {number}; expected one of {sorted(SCENARIOS)}")
    n, m_max = SCENARIOS[number]
    fields = {"manifold": manifold, "n": n, "m_max": m_max, "name": f"scenario-{number}"}
    fields.update(overrides)
    return ScenarioConfig(**fields)


def cosine_basis(k: int, t) -> np.ndarray:
    """zeta_k(t) = sqrt(2) cos(k pi t), orthonormal on [0, 1] for k >= 1."""
    if k < 1:
        raise InvalidInputError(f"cosine basis index starts at 1, got {k}")
    return np.sqrt(2.0) * np.cos(k * np.pi * np.asarray(t, dtype=float))


def truth_s2(t, n_components: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Mean (G, 3) and eigenfunctions (K, G, 3) of the sphere scenario."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    sphere = Sphere(2)
    nu = np.column_stack([2.0 * t / np.sqrt(2.0), 0.3 * np.pi * np.sin(np.pi * t), np.zeros_like(t)])
    mu = sphere.exp_map(NORTH_POLE, nu)
    rot = rotation_between(NORTH_POLE, mu)
    phi = np.empty((n_components, t.size, 3))
    for k in range(1, n_components + 1):
        local = np.column_stack([cosine_basis(k, t / 2.0), cosine_basis(k, (t + 1.0) / 2.0), np.zeros_like(t)])
        phi[k - 1] = np.einsum("gij,gj->gi", rot, local) / np.sqrt(2.0)
    return mu, phi


def truth_so3(t, n_components: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Mean (G, 9) and eigenfunctions (K, G, 9) of the rotation scenario.

    Eigenfunctions are left translations mu(t) iota(...) of the printed skew matrices, so
    they are tangent at mu(t) and orthonormal for the half-trace inner product.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    gen = iota(np.column_stack([2.0 * t, 0.3 * np.pi * np.sin(np.pi * t), np.zeros_like(t)]))
    mu = expm(gen)
    phi = np.empty((n_components, t.size, 9))
    for k in range(1, n_components + 1):
        v = np.column_stack([cosine_basis(k, t / 3.0), cosine_basis(k, (t + 1.0) / 3.0), cosine_basis(k, (t + 2.0) / 3.0)])
        phi[k - 1] = (mu @ iota(v) / np.sqrt(3.0)).reshape(t.size, 9)
    return mu.reshape(t.size, 9), phi


TRUTHS: dict[str, Callable[..., tuple[np.ndarray, np.ndarray]]] = {"S2": truth_s2, "SO3": truth_so3}


@dataclass(frozen=True)
class SimTruth:
    grid: np.ndarray
    scores: np.ndarray
    mean: np.ndarray
    eigenfunctions: np.ndarray
    trajectories: np.ndarray


def generate(
    config: ScenarioConfig,
    rng: np.random.Generator | None = None,
    grid: np.ndarray | None = None,
) -> tuple[LongitudinalDataset, SimTruth]:
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    grid = np.linspace(0.0, 1.0, 51) if grid is None else np.asarray(grid, dtype=float)
    manifold = config.geometry()
    truth = TRUTHS[config.manifold]
    K = config.n_components
    lam = config.eigenvalues

    counts = rng.integers(1, config.m_max + 1, size=config.n)
    scores = rng.standard_normal((config.n, K)) * np.sqrt(lam)[None, :] * config.score_scale
    sd = np.sqrt(config.sigma2)

    subjects = []
    for i in range(config.n):
        times = np.sort(rng.uniform(0.0, 1.0, size=counts[i]))
        mu, phi = truth(times, K)
        log_vals = np.tensordot(scores[i], phi, axes=(0, 0))
        eta = rng.standard_normal((times.size, manifold.dim)) * sd
        noise = np.stack([eta[j] @ manifold.tangent_basis(mu[j]) for j in range(times.size)])
        points = manifold.exp_map(mu, log_vals + noise)
        subjects.append(Subject(f"s{i + 1:04d}", times, points))

    mu_g, phi_g = truth(grid, K)
    traj = np.stack([manifold.exp_map(mu_g, np.tensordot(xi, phi_g, axes=(0, 0))) for xi in scores])
    data = LongitudinalDataset(manifold, tuple(subjects))
    return data, SimTruth(grid, scores, mu_g, phi_g, traj)
