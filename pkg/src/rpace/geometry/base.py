from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from rpace.core.errors import InvalidInputError, ValidationError

POINT_TOL = 1e-9


class Manifold(ABC):
    """Riemannian submanifold of R^D with points and tangent vectors in ambient coordinates.

    All maps broadcast over leading axes: a base point of shape (D,) may be paired with a
    batch of shape (N, D), and vice versa.
    """

    name: str = "manifold"
    is_flat: bool = False
    # provided by concrete kinds
    dim: int
    ambient_dim: int
    injectivity_radius: float

    @abstractmethod
    def dist(self, p, q) -> np.ndarray: ...

    @abstractmethod
    def exp_map(self, p, v) -> np.ndarray: ...

    @abstractmethod
    def log_map(self, p, q) -> np.ndarray: ...

    @abstractmethod
    def project(self, x) -> np.ndarray: ...

    @abstractmethod
    def tangent_basis(self, p) -> np.ndarray:
        """(d, D) array whose rows are an orthonormal basis of the tangent space at p."""

    @abstractmethod
    def to_tangent(self, p, v) -> np.ndarray:
        """Orthogonal projection of ambient vectors v onto the tangent space at p."""

    @abstractmethod
    def point_residual(self, x) -> np.ndarray: ...

    @abstractmethod
    def tangent_residual(self, p, v) -> np.ndarray: ...

    def tangent_projector(self, p) -> np.ndarray:
        basis = self.tangent_basis(p)
        return basis.T @ basis

    def is_point(self, x, tol: float = POINT_TOL) -> np.ndarray:
        return self.point_residual(x) <= tol

    def is_tangent(self, p, v, tol: float = POINT_TOL) -> np.ndarray:
        return self.tangent_residual(p, v) <= tol

    def check_points(self, x, tol: float = POINT_TOL) -> np.ndarray:
        arr = self.coords(x)
        residual = np.atleast_1d(self.point_residual(arr))
        bad = np.flatnonzero(~(residual <= tol))
        if bad.size:
            raise ValidationError(
                f"{bad.size} point(s) violate {self.name} invariants beyond {tol:g}",
                offenders=bad.tolist(),
            )
        return arr

    def coords(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 0 or arr.shape[-1] != self.ambient_dim:
            raise InvalidInputError(
                f"{self.name} expects ambient dimension {self.ambient_dim}, got shape {arr.shape}"
            )
        return arr

    def describe(self) -> dict[str, object]:
        return {"kind": self.name, "dim": self.dim, "ambient_dim": self.ambient_dim}


def _norm(x: np.ndarray) -> np.ndarray:
    return np.linalg.norm(x, axis=-1)
