from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from rpace.core.errors import InvalidInputError
from rpace.geometry.base import Manifold


@dataclass(frozen=True)
class Euclidean(Manifold):
    ambient_dim: int = 1
    name: ClassVar[str] = "euclidean"
    is_flat: ClassVar[bool] = True

    def __post_init__(self) -> None:
        if int(self.ambient_dim) < 1:
            raise InvalidInputError(f"euclidean dimension must be >= 1, got {self.ambient_dim}")

    @property
    def dim(self) -> int:
        return self.ambient_dim

    @property
    def injectivity_radius(self) -> float:
        return float("inf")

    def dist(self, p, q) -> np.ndarray:
        return np.linalg.norm(self.coords(p) - self.coords(q), axis=-1)

    def exp_map(self, p, v) -> np.ndarray:
        return self.coords(p) + self.coords(v)

    def log_map(self, p, q) -> np.ndarray:
        return self.coords(q) - self.coords(p)

    def project(self, x) -> np.ndarray:
        return np.array(self.coords(x), copy=True)

    def tangent_basis(self, p) -> np.ndarray:
        return np.eye(self.ambient_dim)

    def to_tangent(self, p, v) -> np.ndarray:
        p = self.coords(p)
        return np.broadcast_to(self.coords(v), np.broadcast_shapes(p.shape, np.shape(v))).copy()

    def point_residual(self, x) -> np.ndarray:
        return np.zeros(self.coords(x).shape[:-1])

    def tangent_residual(self, p, v) -> np.ndarray:
        return np.zeros(np.broadcast_shapes(self.coords(p).shape, self.coords(v).shape)[:-1])
