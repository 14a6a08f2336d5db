from __future__ import annotations

import numpy as np
import pytest

from rpace.core.errors import EstimationError, OptimizationError, OutOfDomainError
from rpace.data.dataset import LongitudinalDataset
from rpace.estimation.mean import (
    MeanCurve,
    STALL_TOL,
    estimate_mean_at,
    estimate_mean_curve,
    estimate_mean_path,
    eval_mean,
    frechet_objective,
    _local_problem,
    minimize_frechet,
    working_grid,
)
from rpace.estimation.smoothing import EPANECHNIKOV, mean_weights
from rpace.geometry import Euclidean, Sphere
from rpace.simulation.scenarios import generate, scenario_config

from .conftest import random_sphere_points

POLE = np.array([0.0, 0.0, 1.0])


def _local_linear(times, y, t, h):
    k = EPANECHNIKOV.scaled(times - t, h)
    X = np.column_stack([np.ones_like(times), times - t])
    y = np.asarray(y, dtype=float)
    ky = (k if y.ndim == 1 else k[:, None]) * y
    return np.linalg.solve(X.T @ (k[:, None] * X), X.T @ ky)[0]


def _sphere_data(rng, n=40):
    s = Sphere(2)
    records = []
    for i in range(n):
        t = np.sort(rng.uniform(0, 1, int(rng.integers(2, 8))))
        v = np.column_stack([0.9 * t, 0.3 * np.sin(np.pi * t), np.zeros_like(t)])
        noise = 0.05 * rng.standard_normal((t.size, 2))
        v[:, :2] += noise
        records.append((f"s{i}", t, s.exp_map(POLE, v)))
    return LongitudinalDataset.from_arrays(s, records)


def test_objective_vanishes_at_common_point(constant_sphere_data):
    data, p = constant_sphere_data
    assert frechet_objective(p, 0.5, 0.3, data, "OBS") == pytest.approx(0.0, abs=1e-24)


def test_objective_at_antipode():
    # symmetric pair: each observation carries w * omega = 1/2
    q = np.array([1.0, 0.0, 0.0])
    data = LongitudinalDataset.from_arrays(Sphere(2), [("a", [0.4, 0.6], [q, q])])
    assert frechet_objective(-q, 0.5, 0.3, data, [0.5]) == pytest.approx(np.pi**2, rel=1e-12)


def test_objective_is_quadratic_in_euclidean(rng):
    t = rng.uniform(0, 1, 50)
    y = rng.standard_normal(50)
    data = LongitudinalDataset.from_arrays(Euclidean(1), [(f"s{i}", [t[i]], [[y[i]]]) for i in range(50)])
    f = [frechet_objective([c], 0.5, 0.3, data, "OBS") for c in (-1.0, 0.0, 1.0, 2.0)]
    # constant third difference of a quadratic is zero
    assert f[3] - 3 * f[2] + 3 * f[1] - f[0] == pytest.approx(0.0, abs=1e-10)
    best = estimate_mean_at(0.5, 0.3, data, "OBS")
    assert best[0] == pytest.approx(_local_linear(t, y, 0.5, 0.3), abs=1e-8)


def test_mean_of_constant_data(constant_sphere_data):
    data, p = constant_sphere_data
    np.testing.assert_allclose(estimate_mean_at(0.3, 0.3, data, "SUBJ"), p, atol=1e-14)
    curve = estimate_mean_curve(data, 0.3, "OBS")
    np.testing.assert_allclose(curve.points, np.tile(p, (curve.grid.size, 1)), atol=1e-14)
    assert curve.grid[0] == data.time_range[0] and curve.grid[-1] == data.time_range[1]


def test_mean_of_symmetric_pair_is_midpoint():
    s = Sphere(2)
    a = s.exp_map(POLE, [0.4, 0.0, 0.0])
    b = s.exp_map(POLE, [-0.4, 0.0, 0.0])
    data = LongitudinalDataset.from_arrays(s, [("a", [0.45, 0.55], [a, b]), ("b", [0.45, 0.55], [b, a])])
    np.testing.assert_allclose(estimate_mean_at(0.5, 0.3, data, "OBS"), POLE, atol=1e-9)


def test_euclidean_mean_matches_local_linear(rng):
    t = rng.uniform(0, 1, 80)
    y = rng.standard_normal((80, 2)) + np.column_stack([t, t**2])
    data = LongitudinalDataset.from_arrays(Euclidean(2), [(f"s{i}", [t[i]], [y[i]]) for i in range(80)])
    for t0 in (0.1, 0.5, 0.85):
        np.testing.assert_allclose(estimate_mean_at(t0, 0.25, data, "OBS"), _local_linear(t, y, t0, 0.25), atol=1e-8)


def test_first_order_condition_and_monotone_descent(rng):
    data = _sphere_data(rng)
    s = data.manifold
    h = 0.25
    w = mean_weights("OBS", data.counts, h)
    pooled = data.pooled()
    coef, pts = _local_problem(pooled, w[pooled.subject], 0.5, h)
    trace = minimize_frechet(s, coef, pts, s.project(pts[0] + np.array([0.3, 0.0, 0.0])), t=0.5)
    assert np.all(np.diff(trace.history) <= 1e-15)
    assert np.linalg.norm(coef @ s.log_map(trace.point, pts)) <= 1e-6
    assert trace.grad_norm <= 1e-6 * (1 + abs(trace.objective))


def test_wide_bandwidth_mean_path_converges_on_scenario_data():
    # first replicate of the seed-2024 sphere study; the Armijo test used to stall near t=0.793
    data, _ = generate(scenario_config(1, "S2", seed=2024), np.random.default_rng(np.random.SeedSequence(2024).spawn(1)[0]), np.linspace(0, 1, 51))
    h = 0.5
    w = mean_weights("OBS", data.counts, h)
    times = np.unique(data.pooled().times)
    path = estimate_mean_path(data, h, w, times)
    assert np.all(np.isfinite(path))
    s = data.manifold
    pooled = data.pooled()
    g = int(np.argmin(np.abs(times - 0.793061)))
    coef, pts = _local_problem(pooled, w[pooled.subject], times[g], h)
    f = float(coef @ s.dist(path[g], pts) ** 2)
    assert 2 * np.linalg.norm(coef @ s.log_map(path[g], pts)) <= STALL_TOL * (1 + f)


def test_iteration_cap(rng):
    data = _sphere_data(rng)
    s = data.manifold
    w = mean_weights("OBS", data.counts, 0.25)
    pooled = data.pooled()
    coef, pts = _local_problem(pooled, w[pooled.subject], 0.5, 0.25)
    opt = minimize_frechet(s, coef, pts, pts[0], t=0.5).point
    assert minimize_frechet(s, coef, pts, opt, t=0.5, max_iter=0).iterations == 0
    far = s.exp_map(opt, s.to_tangent(opt, np.array([1.0, 0.0, 0.0])))
    with pytest.raises(OptimizationError, match="no convergence after 1 iterations"):
        minimize_frechet(s, coef, pts, far, t=0.5, max_iter=1)


def test_sphere_mean_is_rotation_equivariant(rng):
    data = _sphere_data(rng)
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    rotated = LongitudinalDataset.from_arrays(
        data.manifold, [(s.id, s.times, s.points @ q.T) for s in data.subjects]
    )
    for t in (0.2, 0.6):
        np.testing.assert_allclose(
            estimate_mean_at(t, 0.3, rotated, "OBS"), q @ estimate_mean_at(t, 0.3, data, "OBS"), atol=1e-6
        )


def test_mean_path_reports_failing_points():
    data = LongitudinalDataset.from_arrays(
        Euclidean(1), [("a", [0.0, 0.05, 0.1], [[0.0], [1.0], [2.0]]), ("b", [0.9, 1.0], [[0.0], [1.0]])]
    )
    with pytest.raises(EstimationError) as err:
        estimate_mean_path(data, 0.15, "OBS", [0.05, 0.5, 0.95])
    assert len(err.value.failures) == 1
    assert "t=0.5" in err.value.failures[0][0]


def test_eval_mean_interpolates_geodesically(rng):
    s = Sphere(2)
    pts = random_sphere_points(rng, 5)
    pts[1:] = s.exp_map(pts[:-1], 0.3 * s.to_tangent(pts[:-1], rng.standard_normal((4, 3))))
    curve = MeanCurve(s, np.linspace(0, 1, 5), pts, 0.2)
    np.testing.assert_array_equal(eval_mean(curve, 0.5), pts[2])
    mid = eval_mean(curve, 0.375)
    assert s.dist(mid, pts[1]) == pytest.approx(s.dist(mid, pts[2]), abs=1e-9)
    assert eval_mean(curve, [0.0, 0.1, 1.0]).shape == (3, 3)
    with pytest.raises(OutOfDomainError):
        eval_mean(curve, 1.2)


def test_eval_mean_is_linear_in_euclidean():
    grid = np.linspace(0.0, 2.0, 5)
    curve = MeanCurve(Euclidean(2), grid, np.column_stack([3 * grid + 1, -grid]), 0.3)
    t = np.array([0.1, 0.77, 1.9])
    np.testing.assert_allclose(eval_mean(curve, t), np.column_stack([3 * t + 1, -t]), atol=1e-12)


def test_working_grid(constant_sphere_data):
    data, _ = constant_sphere_data
    g = working_grid(data, 11, (0.0, 1.0))
    np.testing.assert_allclose(g, np.linspace(0, 1, 11))
    assert working_grid(data).size == 51
