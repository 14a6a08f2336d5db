from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from rpace.core.errors import CutLocusError, DegenerateInputError, DomainError, InvalidInputError
from rpace.geometry.base import Manifold, _norm

SMALL_ANGLE = 1e-6
ZERO_ANGLE = 1e-14
CUT_LOCUS_TOL = 1e-8


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=-1)


def _angle(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    # 2*atan2(|p-q|, |p+q|) is symmetric in (p, q) and accurate near 0 and near pi
    return 2.0 * np.arctan2(_norm(p - q), _norm(p + q))


@dataclass(frozen=True)
class Sphere(Manifold):
    """Unit sphere S^d in R^(d+1) with the great-circle metric."""

    dim: int = 2
    name: ClassVar[str] = "sphere"

    def __post_init__(self) -> None:
        if int(self.dim) < 1:
            raise InvalidInputError(f"sphere dimension must be >= 1, got {self.dim}")

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1

    @property
    def injectivity_radius(self) -> float:
        return float(np.pi)

    def dist(self, p, q) -> np.ndarray:
        return _angle(self.coords(p), self.coords(q))

    def exp_map(self, p, v) -> np.ndarray:
        p = self.coords(p)
        v = self.coords(v)
        n = _norm(v)[..., None]
        # sinc(n/pi) == sin(n)/n with the removable singularity at 0
        out = np.cos(n) * p + np.sinc(n / np.pi) * v
        out = out / _norm(out)[..., None]
        return np.where(n < ZERO_ANGLE, np.broadcast_to(p, out.shape), out)

    def log_map(self, p, q) -> np.ndarray:
        p = self.coords(p)
        q = self.coords(q)
        theta = _angle(p, q)
        cut = np.atleast_1d(theta >= np.pi - CUT_LOCUS_TOL)
        if cut.any():
            idx = np.flatnonzero(cut).tolist()
            raise CutLocusError(f"log_map undefined for antipodal pair(s) at index {idx[:10]}")
        u = q - _dot(p, q)[..., None] * p
        sin_theta = np.sin(theta)
        safe = np.where(theta < SMALL_ANGLE, 1.0, sin_theta)
        factor = np.where(theta < SMALL_ANGLE, 1.0 + theta**2 / 6.0, theta / safe)
        out = factor[..., None] * u
        return np.where((theta < ZERO_ANGLE)[..., None], 0.0, out)

    def project(self, x) -> np.ndarray:
        x = self.coords(x)
        n = _norm(x)[..., None]
        if np.any(~np.isfinite(n)) or np.any(n == 0.0):
            raise DegenerateInputError("cannot project the zero vector onto the sphere")
        return x / n

    def tangent_basis(self, p) -> np.ndarray:
        p = self.coords(p)
        if p.ndim != 1:
            raise InvalidInputError("tangent_basis takes a single base point")
        drop = int(np.argmax(np.abs(p)))
        basis: list[np.ndarray] = []
        for k in range(self.ambient_dim):
            if k == drop:
                continue
            e = np.zeros(self.ambient_dim)
            e[k] = 1.0
            e -= (e @ p) * p
            for b in basis:
                e -= (e @ b) * b
            basis.append(e / np.linalg.norm(e))
        return np.array(basis)

    def to_tangent(self, p, v) -> np.ndarray:
        p = self.coords(p)
        v = self.coords(v)
        return v - _dot(p, v)[..., None] * p

    def point_residual(self, x) -> np.ndarray:
        return np.abs(_norm(self.coords(x)) - 1.0)

    def tangent_residual(self, p, v) -> np.ndarray:
        return np.abs(_dot(self.coords(p), self.coords(v)))


def rotation_between(p, q) -> np.ndarray:
    """Rotation R with R p = q acting as the identity on span{p, q}^perp.

    `q` may be a batch (N, D); the result is then (N, D, D).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    c = _dot(p, q)
    if np.any(c <= -1.0 + 1e-12):
        raise DomainError("rotation_between is undefined for antipodal points")
    k = q[..., :, None] * p[..., None, :] - p[..., :, None] * q[..., None, :]
    eye = np.eye(p.shape[-1])
    return eye + k + (k @ k) / (1.0 + c)[..., None, None]
