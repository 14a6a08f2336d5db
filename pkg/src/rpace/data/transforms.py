"""Maps from raw measurement rows onto the unit sphere."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from rpace.core.errors import ValidationError
from rpace.data.ingest import read_coordinate_table, write_rows

SUM_TOL = 1e-6


def _rows(rows) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(rows, dtype=float))
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise ValidationError(f"expected a 2-d array of rows, got shape {arr.shape}")
    return arr


def transform_compositional(rows) -> np.ndarray:
    """Square-root map of compositions onto the positive orthant of S^(D-1).

    Rows whose sum is within 1e-6 of one are renormalized; zeros are kept.
    """
    x = _rows(rows)
    negative = np.flatnonzero(np.any(x < 0, axis=1))
    if negative.size:
        raise ValidationError(f"negative composition entries in rows {negative[:10].tolist()}", negative.tolist())
    sums = x.sum(axis=1)
    off = np.flatnonzero(np.abs(sums - 1.0) > SUM_TOL)
    if off.size:
        raise ValidationError(f"composition rows {off[:10].tolist()} do not sum to 1", off.tolist())
    return np.sqrt(x / sums[:, None])


def transform_preshape(rows) -> np.ndarray:
    """Scale each measurement vector to unit Euclidean norm."""
    x = _rows(rows)
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(~(norms > 0))
    if zero.size:
        raise ValidationError(f"zero-length rows {zero[:10].tolist()} have no preshape", zero.tolist())
    return x / norms[:, None]


TRANSFORMS = {"compositional": transform_compositional, "preshape": transform_preshape}


def transform_csv(src: str | Path, dst: str | Path, kind: str) -> Path:
    if kind not in TRANSFORMS:
        raise ValidationError(f"unknown transform {kind!r}; expected one of {sorted(TRANSFORMS)}")
    table = read_coordinate_table(src)
    try:
        out = TRANSFORMS[kind](table.coords)
    except ValidationError as exc:
        lines = [table.lines[i] for i in exc.offenders]
        raise ValidationError(f"{exc} (lines {lines[:10]})", lines) from None
    return write_rows(dst, table.subject_ids, table.times, out)
