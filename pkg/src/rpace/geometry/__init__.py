from __future__ import annotations

from rpace.core.errors import InvalidInputError
from rpace.geometry.base import POINT_TOL, Manifold
from rpace.geometry.euclidean import Euclidean
from rpace.geometry.so3 import SpecialOrthogonal3, hat, iota, vee
from rpace.geometry.sphere import Sphere, rotation_between

KINDS = ("sphere", "so3", "euclidean")


def get_manifold(kind: str, ambient_dim: int | None = None) -> Manifold:
    """Build a manifold from a CLI/config tag; `ambient_dim` is the coordinate count."""
    tag = kind.strip().lower()
    if tag in ("sphere", "s2"):
        return Sphere((ambient_dim or 3) - 1)
    if tag == "so3":
        if ambient_dim not in (None, 9):
            raise InvalidInputError(f"so3 needs 9 coordinates, got {ambient_dim}")
        return SpecialOrthogonal3()
    if tag == "euclidean":
        return Euclidean(ambient_dim or 1)
    raise InvalidInputError(f"unknown manifold kind {kind!r}; expected one of {KINDS}")


__all__ = [
    "KINDS",
    "POINT_TOL",
    "Euclidean",
    "Manifold",
    "SpecialOrthogonal3",
    "Sphere",
    "get_manifold",
    "hat",
    "iota",
    "rotation_between",
    "vee",
]
