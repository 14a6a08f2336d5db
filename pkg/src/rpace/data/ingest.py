from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np
from dateutil import parser as dateparser

from rpace.core.errors import ParseError, ValidationError
from rpace.data.dataset import LongitudinalDataset
from rpace.geometry import POINT_TOL, Manifold, get_manifold

logger = logging.getLogger(__name__)

PROJECT_TOL = 1e-6
TIME_FORMATS = ("numeric", "date")


@dataclass(frozen=True)
class CoordinateTable:
    """Raw rows of a `subject_id,time,c1..cD` file with their source line numbers."""

    subject_ids: list[str]
    times: list[str]
    coords: np.ndarray
    lines: list[int]

    @property
    def ambient_dim(self) -> int:
        return int(self.coords.shape[1])


def _check_header(header: list[str], path: Path) -> int:
    cols = [c.strip() for c in header]
    if len(cols) < 3 or cols[0] != "subject_id" or cols[1] != "time":
        raise ParseError(f"{path}: header must be subject_id,time,c1..cD", 1)
    expected = [f"c{k}" for k in range(1, len(cols) - 1)]
    if cols[2:] != expected:
        raise ParseError(f"{path}: coordinate columns must be named {','.join(expected)}", 1)
    return len(expected)


def read_coordinate_table(path: str | Path) -> CoordinateTable:
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}", 0) from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path} is empty", 1)
        D = _check_header(header, path)
        sids, times, rows, lines = [], [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != D + 2:
                raise ParseError(f"expected {D + 2} fields, got {len(row)}", line)
            sid = row[0].strip()
            if not sid:
                raise ParseError("empty subject_id", line)
            try:
                vals = [float(c) for c in row[2:]]
            except ValueError:
                raise ParseError(f"non-numeric coordinate in {row[2:]}", line) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite coordinate", line)
            sids.append(sid)
            times.append(row[1].strip())
            rows.append(vals)
            lines.append(line)
    if not rows:
        raise ParseError(f"{path} has no data rows", 2)
    return CoordinateTable(sids, times, np.array(rows, dtype=float), lines)


def parse_times(raw: list[str], lines: list[int], time_format: str = "numeric", time_origin: str | None = None) -> np.ndarray:
    """Numeric times as-is; ISO dates become days since `time_origin` (default: earliest date)."""
    if time_format not in TIME_FORMATS:
        raise ValidationError(f"unknown time format {time_format!r}; expected one of {TIME_FORMATS}")
    if time_format == "numeric":
        out = []
        for value, line in zip(raw, lines):
            try:
                t = float(value)
            except ValueError:
                raise ParseError(f"time {value!r} is not numeric", line) from None
            if not math.isfinite(t):
                raise ParseError("non-finite time", line)
            out.append(t)
        return np.array(out)
    stamps: list[datetime] = []
    for value, line in zip(raw, lines):
        try:
            stamps.append(dateparser.isoparse(value))
        except (ValueError, OverflowError):
            raise ParseError(f"time {value!r} is not an ISO date", line) from None
    origin = dateparser.isoparse(time_origin) if time_origin else min(stamps)
    return np.array([(s - origin).total_seconds() / 86400.0 for s in stamps])


def ingest_csv(
    path: str | Path,
    kind: str | Manifold = "sphere",
    *,
    project_on_ingest: bool = False,
    tolerance: float = PROJECT_TOL,
    time_format: str = "numeric",
    time_origin: str | None = None,
) -> LongitudinalDataset:
    table = read_coordinate_table(path)
    manifold = kind if isinstance(kind, Manifold) else get_manifold(kind, table.ambient_dim)
    if manifold.ambient_dim != table.ambient_dim:
        raise ValidationError(
            f"{manifold.name} needs {manifold.ambient_dim} coordinates, file has {table.ambient_dim}"
        )
    times = parse_times(table.times, table.lines, time_format, time_origin)

    seen: dict[tuple[str, float], int] = {}
    dupes = []
    for sid, t, line in zip(table.subject_ids, times, table.lines):
        key = (sid, float(t))
        if key in seen:
            dupes.append(f"line {line} (first at line {seen[key]})")
        else:
            seen[key] = line
    if dupes:
        raise ValidationError(f"duplicate (subject_id, time) rows: {', '.join(dupes[:10])}", dupes)

    coords = table.coords
    residual = manifold.point_residual(coords)
    strict = residual <= POINT_TOL
    near = residual <= tolerance
    if project_on_ingest:
        fix = ~strict & near
        if fix.any():
            logger.info("projected %d near-manifold row(s) onto %s", int(fix.sum()), manifold.name)
            coords = coords.copy()
            coords[fix] = manifold.project(coords[fix])
        bad = ~near
    else:
        bad = ~strict
    if bad.any():
        offenders = [table.lines[i] for i in np.flatnonzero(bad)]
        raise ValidationError(
            f"{len(offenders)} row(s) violate {manifold.name} invariants: lines {offenders[:10]}", offenders
        )

    groups: dict[str, list[int]] = {}
    for idx, sid in enumerate(table.subject_ids):
        groups.setdefault(sid, []).append(idx)
    records = [(sid, times[idx], coords[idx]) for sid, idx in groups.items()]
    data = LongitudinalDataset.from_arrays(manifold, records)
    logger.info("ingested %s: %d subjects, %d observations", Path(path).name, data.n_subjects, data.n_obs)
    return data


def write_rows(path: str | Path, subject_ids, times, coords) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    coords = np.asarray(coords, dtype=float)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "time", *[f"c{k}" for k in range(1, coords.shape[1] + 1)]])
        for sid, t, row in zip(subject_ids, times, coords):
            w.writerow([sid, t if isinstance(t, str) else repr(float(t)), *[repr(float(x)) for x in row]])
    return path


def write_dataset_csv(data: LongitudinalDataset, path: str | Path) -> Path:
    sids, times, coords = [], [], []
    for s in data.subjects:
        sids.extend([s.id] * s.m)
        times.extend(s.times.tolist())
        coords.append(s.points)
    return write_rows(path, sids, times, np.concatenate(coords))
