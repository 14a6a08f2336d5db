from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from rpace.core.errors import InvalidInputError
from rpace.geometry import POINT_TOL, Manifold


@dataclass(frozen=True)
class Subject:
    id: str
    times: np.ndarray
    points: np.ndarray

    @property
    def m(self) -> int:
        return int(self.times.shape[0])


@dataclass(frozen=True)
class PooledObservations:
    """All observations in one time-sorted table; `subject` indexes into the dataset."""

    times: np.ndarray
    points: np.ndarray
    subject: np.ndarray

    @property
    def n_obs(self) -> int:
        return int(self.times.shape[0])

    def window(self, t: float, h: float) -> slice:
        lo = int(np.searchsorted(self.times, t - h, side="right"))
        hi = int(np.searchsorted(self.times, t + h, side="left"))
        return slice(lo, hi)


@dataclass(frozen=True)
class LongitudinalDataset:
    manifold: Manifold
    subjects: tuple[Subject, ...]
    _pooled: list = field(default_factory=list, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.subjects:
            raise InvalidInputError("dataset has no subjects")
        seen: set[str] = set()
        D = self.manifold.ambient_dim
        for s in self.subjects:
            if s.id in seen:
                raise InvalidInputError(f"duplicate subject id {s.id!r}")
            seen.add(s.id)
            if s.times.ndim != 1 or s.m < 1:
                raise InvalidInputError(f"subject {s.id!r} needs at least one observation")
            if s.points.shape != (s.m, D):
                raise InvalidInputError(
                    f"subject {s.id!r}: points shape {s.points.shape}, expected {(s.m, D)}"
                )
            if not (np.all(np.isfinite(s.times)) and np.all(np.isfinite(s.points))):
                raise InvalidInputError(f"subject {s.id!r} has non-finite values")

    @classmethod
    def from_arrays(
        cls,
        manifold: Manifold,
        records: Iterable[tuple[str, Sequence[float], Sequence[Sequence[float]]]],
    ) -> "LongitudinalDataset":
        subjects = []
        for sid, times, points in records:
            t = np.asarray(times, dtype=float).reshape(-1)
            y = np.asarray(points, dtype=float).reshape(t.shape[0], -1)
            order = np.argsort(t, kind="stable")
            subjects.append(Subject(str(sid), t[order], y[order]))
        return cls(manifold, tuple(subjects))

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    @property
    def counts(self) -> np.ndarray:
        return np.array([s.m for s in self.subjects], dtype=int)

    @property
    def n_obs(self) -> int:
        return int(self.counts.sum())

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.subjects]

    @property
    def time_range(self) -> tuple[float, float]:
        lo = min(float(s.times[0]) for s in self.subjects)
        hi = max(float(s.times[-1]) for s in self.subjects)
        return lo, hi

    def pooled(self) -> PooledObservations:
        if not self._pooled:
            times = np.concatenate([s.times for s in self.subjects])
            points = np.concatenate([s.points for s in self.subjects])
            subject = np.repeat(np.arange(self.n_subjects), self.counts)
            order = np.argsort(times, kind="stable")
            self._pooled.append(PooledObservations(times[order], points[order], subject[order]))
        return self._pooled[0]

    def validate(self, tol: float = POINT_TOL) -> None:
        for s in self.subjects:
            self.manifold.check_points(s.points, tol)

    def with_manifold(self, manifold: Manifold) -> "LongitudinalDataset":
        return LongitudinalDataset(manifold, self.subjects)
