from __future__ import annotations

import os

import numpy as np
import pytest

from rpace.data.dataset import LongitudinalDataset
from rpace.geometry import Euclidean, Sphere


def pytest_collection_modifyitems(config, items):
    if os.getenv("RPACE_RUN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="Monte Carlo run; set RPACE_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_sphere_points(rng, n, dim=2):
    x = rng.standard_normal((n, dim + 1))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


@pytest.fixture
def constant_sphere_data():
    p = np.array([0.0, 0.6, 0.8])
    records = [(f"s{i}", np.linspace(0.0, 1.0, 6) + 0.01 * i, np.tile(p, (6, 1))) for i in range(8)]
    return LongitudinalDataset.from_arrays(Sphere(2), records), p


@pytest.fixture
def scalar_data(rng):
    """Sparse 1-d Gaussian process with two components and noise, times in [0, 1]."""
    records = []
    for i in range(40):
        m = int(rng.integers(3, 9))
        t = np.sort(rng.uniform(0.0, 1.0, m))
        xi = rng.standard_normal(2) * np.array([1.0, 0.5])
        y = (
            np.sin(np.pi * t)
            + xi[0] * np.sqrt(2.0) * np.cos(np.pi * t)
            + xi[1] * np.sqrt(2.0) * np.cos(2.0 * np.pi * t)
            + 0.1 * rng.standard_normal(m)
        )
        records.append((f"s{i:02d}", t, y[:, None]))
    return LongitudinalDataset.from_arrays(Euclidean(1), records)
