from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from scipy.spatial.transform import Rotation

from rpace.core.errors import CutLocusError, DegenerateInputError, InvalidInputError
from rpace.geometry.base import Manifold

CUT_LOCUS_TOL = 1e-8
SQRT2 = float(np.sqrt(2.0))


def iota(v) -> np.ndarray:
    """Skew matrix with (v1, v2, v3) below the diagonal at (2,1), (3,1), (3,2)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 1, 0] = v[..., 0]
    out[..., 2, 0] = v[..., 1]
    out[..., 2, 1] = v[..., 2]
    return out - np.swapaxes(out, -1, -2)


def hat(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return iota(np.stack([w[..., 2], -w[..., 1], w[..., 0]], axis=-1))


def vee(a) -> np.ndarray:
    """Rotation vector of the skew part of a (inverse of hat)."""
    a = np.asarray(a, dtype=float)
    return 0.5 * np.stack(
        [a[..., 2, 1] - a[..., 1, 2], a[..., 0, 2] - a[..., 2, 0], a[..., 1, 0] - a[..., 0, 1]],
        axis=-1,
    )


def _mats(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[:-1] + (3, 3))


def _flat(m: np.ndarray) -> np.ndarray:
    return m.reshape(m.shape[:-2] + (9,))


def _rotvec(r: np.ndarray) -> np.ndarray:
    shape = r.shape[:-2]
    w = Rotation.from_matrix(r.reshape(-1, 3, 3)).as_rotvec()
    return w.reshape(shape + (3,))


def _rotation(w: np.ndarray) -> np.ndarray:
    shape = w.shape[:-1]
    m = Rotation.from_rotvec(w.reshape(-1, 3)).as_matrix()
    return m.reshape(shape + (3, 3))


@dataclass(frozen=True)
class SpecialOrthogonal3(Manifold):
    """SO(3) as row-major flattened 3x3 matrices in R^9 with the Frobenius metric.

    Under this metric dist(I, Rz(theta)) = sqrt(2) * theta.
    """

    name: ClassVar[str] = "so3"

    @property
    def dim(self) -> int:
        return 3

    @property
    def ambient_dim(self) -> int:
        return 9

    @property
    def injectivity_radius(self) -> float:
        return SQRT2 * float(np.pi)

    def _relative_rotvec(self, p, q) -> tuple[np.ndarray, np.ndarray]:
        pm = _mats(self.coords(p))
        qm = _mats(self.coords(q))
        rel = np.swapaxes(pm, -1, -2) @ qm
        return pm, _rotvec(rel)

    def dist(self, p, q) -> np.ndarray:
        _, w = self._relative_rotvec(p, q)
        return SQRT2 * np.linalg.norm(w, axis=-1)

    def exp_map(self, p, v) -> np.ndarray:
        pm = _mats(self.coords(p))
        vm = _mats(self.coords(v))
        w = vee(np.swapaxes(pm, -1, -2) @ vm)
        return _flat(pm @ _rotation(w))

    def log_map(self, p, q) -> np.ndarray:
        pm, w = self._relative_rotvec(p, q)
        angle = np.atleast_1d(np.linalg.norm(w, axis=-1))
        cut = angle >= np.pi - CUT_LOCUS_TOL
        if cut.any():
            idx = np.flatnonzero(cut).tolist()
            raise CutLocusError(f"log_map undefined at rotation angle pi, index {idx[:10]}")
        return _flat(pm @ hat(w))

    def project(self, x) -> np.ndarray:
        m = _mats(self.coords(x))
        u, s, vt = np.linalg.svd(m)
        if np.any(~np.isfinite(s)) or np.any(s[..., -1] <= 1e-12 * s[..., 0]):
            raise DegenerateInputError("cannot project a singular matrix onto SO(3)")
        r = u @ vt
        flip = np.linalg.det(r) < 0
        if np.any(flip):
            u = u.copy()
            u[..., :, -1] = np.where(flip[..., None], -u[..., :, -1], u[..., :, -1])
            r = u @ vt
        return _flat(r)

    def tangent_basis(self, p) -> np.ndarray:
        pm = _mats(self.coords(p))
        if pm.ndim != 2:
            raise InvalidInputError("tangent_basis takes a single base point")
        gens = iota(np.eye(3)) / SQRT2
        return _flat(pm[None, :, :] @ gens)

    def to_tangent(self, p, v) -> np.ndarray:
        pm = _mats(self.coords(p))
        a = np.swapaxes(pm, -1, -2) @ _mats(self.coords(v))
        return _flat(pm @ (0.5 * (a - np.swapaxes(a, -1, -2))))

    def point_residual(self, x) -> np.ndarray:
        m = _mats(self.coords(x))
        gram = np.swapaxes(m, -1, -2) @ m - np.eye(3)
        res = np.linalg.norm(gram, axis=(-2, -1))
        return np.where(np.linalg.det(m) > 0, res, np.inf)

    def tangent_residual(self, p, v) -> np.ndarray:
        pm = _mats(self.coords(p))
        a = np.swapaxes(pm, -1, -2) @ _mats(self.coords(v))
        return np.linalg.norm(0.5 * (a + np.swapaxes(a, -1, -2)), axis=(-2, -1))
