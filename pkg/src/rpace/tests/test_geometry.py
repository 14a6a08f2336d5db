from __future__ import annotations

import numpy as np
import pytest
from scipy.linalg import expm, logm

from rpace.core.errors import CutLocusError, InvalidInputError, ValidationError
from rpace.geometry import Euclidean, SpecialOrthogonal3, Sphere, get_manifold, hat, iota, rotation_between, vee

from .conftest import random_sphere_points


def rz(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rodrigues(axis, theta):
    k = hat(axis)
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def random_rotations(rng, n):
    w = rng.standard_normal((n, 3))
    w *= (rng.uniform(0.0, 3.0, n) / np.linalg.norm(w, axis=1))[:, None]
    return np.stack([expm(hat(x)) for x in w])


def test_sphere_dist_examples():
    s = Sphere(2)
    assert s.dist([0, 0, 1], [0, 0, 1]) == pytest.approx(0.0, abs=1e-15)
    assert s.dist([1, 0, 0], [0, 1, 0]) == pytest.approx(np.pi / 2)
    assert s.dist([0, 0, 1], [0, 0, -1]) == pytest.approx(np.pi)


def test_sphere_exp_log_examples():
    s = Sphere(2)
    p = np.array([0.0, 0.0, 1.0])
    np.testing.assert_allclose(s.exp_map(p, [np.pi / 2, 0, 0]), [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(s.log_map(p, [1, 0, 0]), [np.pi / 2, 0, 0], atol=1e-15)
    np.testing.assert_array_equal(s.exp_map(p, np.zeros(3)), p)
    np.testing.assert_array_equal(s.log_map(p, p), np.zeros(3))


def test_sphere_log_inverts_exp(rng):
    s = Sphere(2)
    p = random_sphere_points(rng, 1000)
    v = s.to_tangent(p, rng.standard_normal((1000, 3)))
    v *= (rng.uniform(1e-3, np.pi - 0.1, 1000) / np.linalg.norm(v, axis=1))[:, None]
    np.testing.assert_allclose(s.log_map(p, s.exp_map(p, v)), v, atol=1e-9)


def test_sphere_log_small_angle_and_symmetry(rng):
    s = Sphere(3)
    p = random_sphere_points(rng, 50, dim=3)
    q = random_sphere_points(rng, 50, dim=3)
    np.testing.assert_allclose(s.dist(p, q), s.dist(q, p), atol=1e-15)
    v = s.to_tangent(p, 1e-9 * rng.standard_normal((50, 4)))
    np.testing.assert_allclose(s.log_map(p, s.exp_map(p, v)), v, atol=1e-15)


def test_sphere_log_rejects_antipodes():
    with pytest.raises(CutLocusError):
        Sphere(2).log_map([0, 0, 1], [0, 0, -1])


def test_sphere_project_and_tangent_basis():
    s = Sphere(2)
    np.testing.assert_allclose(s.project([2.0, 0.0, 0.0]), [1, 0, 0])
    basis = s.tangent_basis(np.array([0.0, 0.0, 1.0]))
    assert basis.shape == (2, 3)
    np.testing.assert_allclose(basis[:, 2], 0.0, atol=1e-15)


@pytest.mark.parametrize("manifold", [Sphere(2), Sphere(5), SpecialOrthogonal3(), Euclidean(4)])
def test_tangent_basis_is_orthonormal_and_tangent(manifold, rng):
    if isinstance(manifold, Sphere):
        p = random_sphere_points(rng, 1, manifold.dim)[0]
    elif isinstance(manifold, SpecialOrthogonal3):
        p = random_rotations(rng, 1)[0].reshape(9)
    else:
        p = rng.standard_normal(4)
    basis = manifold.tangent_basis(p)
    assert basis.shape == (manifold.dim, manifold.ambient_dim)
    np.testing.assert_allclose(basis @ basis.T, np.eye(manifold.dim), atol=1e-9)
    assert np.all(manifold.is_tangent(p, basis))
    proj = manifold.tangent_projector(p)
    np.testing.assert_allclose(proj @ proj, proj, atol=1e-12)


def test_so3_dist_and_exp_match_oracles():
    so3 = SpecialOrthogonal3()
    eye = np.eye(3).reshape(9)
    assert so3.dist(eye, rz(np.pi / 2).reshape(9)) == pytest.approx(np.pi / np.sqrt(2), abs=1e-12)
    oracle = np.linalg.norm(np.real(logm(rz(np.pi / 2))), "fro")
    assert so3.dist(eye, rz(np.pi / 2).reshape(9)) == pytest.approx(oracle, abs=1e-9)
    for theta in (0.1, 1.0, 2.0):
        got = so3.exp_map(eye, iota([0.0, 0.0, theta]).reshape(9)).reshape(3, 3)
        # iota puts v3 at (3,2): the rotation axis is e1 with angle theta
        np.testing.assert_allclose(got, rodrigues(np.array([1.0, 0.0, 0.0]), theta), atol=1e-12)
        z = so3.exp_map(eye, iota([theta, 0.0, 0.0]).reshape(9)).reshape(3, 3)
        np.testing.assert_allclose(z, rz(theta), atol=1e-12)


def test_so3_log_inverts_exp(rng):
    so3 = SpecialOrthogonal3()
    p = random_rotations(rng, 200).reshape(200, 9)
    w = rng.standard_normal((200, 3))
    w *= (rng.uniform(0.01, 3.0, 200) / np.linalg.norm(w, axis=1))[:, None]
    v = (p.reshape(200, 3, 3) @ hat(w)).reshape(200, 9)
    np.testing.assert_allclose(so3.log_map(p, so3.exp_map(p, v)), v, atol=1e-9)
    np.testing.assert_allclose(so3.dist(p, so3.exp_map(p, v)), np.linalg.norm(v, axis=1), atol=1e-9)


def test_so3_project_is_nearest_rotation(rng):
    so3 = SpecialOrthogonal3()
    x = np.eye(3) + 0.01 * rng.standard_normal((3, 3))
    r = so3.project(x.reshape(9)).reshape(3, 3)
    np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-12)
    assert np.linalg.det(r) == pytest.approx(1.0)
    best = np.linalg.norm(r - x)
    for cand in random_rotations(rng, 200):
        assert best <= np.linalg.norm(cand - x) + 1e-12
    flipped = so3.project(np.diag([1.0, 1.0, -1.0]).reshape(9)).reshape(3, 3)
    assert np.linalg.det(flipped) == pytest.approx(1.0)


def test_so3_basis_at_identity_and_iota_norm(rng):
    basis = SpecialOrthogonal3().tangent_basis(np.eye(3).reshape(9)).reshape(3, 3, 3)
    for b in basis:
        np.testing.assert_allclose(b, -b.T, atol=1e-15)
        assert np.linalg.norm(b) == pytest.approx(1.0)
    v = rng.standard_normal((20, 3))
    np.testing.assert_allclose(np.linalg.norm(iota(v), axis=(1, 2)), np.sqrt(2) * np.linalg.norm(v, axis=1))
    np.testing.assert_allclose(vee(hat(v)), v, atol=1e-15)


def test_so3_log_rejects_half_turn():
    with pytest.raises(CutLocusError):
        SpecialOrthogonal3().log_map(np.eye(3).reshape(9), rz(np.pi).reshape(9))


def test_rotation_between(rng):
    np.testing.assert_allclose(rotation_between([0, 0, 1.0], [0, 0, 1.0]), np.eye(3), atol=1e-15)
    r = rotation_between(np.array([0, 0, 1.0]), np.array([1.0, 0, 0]))
    np.testing.assert_allclose(r @ [0, 0, 1], [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(r @ [0, 1, 0], [0, 1, 0], atol=1e-15)
    p = random_sphere_points(rng, 1000)
    q = random_sphere_points(rng, 1000)
    rots = np.stack([rotation_between(a, b) for a, b in zip(p, q)])
    np.testing.assert_allclose(np.einsum("nij,nj->ni", rots, p), q, atol=1e-9)
    gram = np.einsum("nki,nkj->nij", rots, rots)
    assert np.max(np.linalg.norm(gram - np.eye(3), axis=(1, 2))) <= 1e-9


def test_euclidean_is_flat():
    e = Euclidean(2)
    np.testing.assert_array_equal(e.log_map([1.0, 2.0], [4.0, 6.0]), [3.0, 4.0])
    assert e.dist([1.0, 2.0], [4.0, 6.0]) == pytest.approx(5.0)
    np.testing.assert_array_equal(e.project([3.0, -1.0]), [3.0, -1.0])


def test_check_points_and_coords():
    s = Sphere(2)
    with pytest.raises(ValidationError) as err:
        s.check_points([[0, 0, 1.0], [0, 0, 1.5]])
    assert err.value.offenders == [1]
    with pytest.raises(InvalidInputError):
        s.coords([1.0, 0.0])


def test_get_manifold():
    assert get_manifold("sphere", 4) == Sphere(3)
    assert get_manifold("S2") == Sphere(2)
    assert isinstance(get_manifold("so3", 9), SpecialOrthogonal3)
    assert get_manifold("euclidean", 2) == Euclidean(2)
    with pytest.raises(InvalidInputError):
        get_manifold("torus")
    with pytest.raises(InvalidInputError):
        get_manifold("so3", 4)
