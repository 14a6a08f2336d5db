"""Run directories for fits and studies.

Fit directory schema (all tables comma-delimited with a header row, floats in shortest
round-trip form):

    summary.json          metadata: manifold, scheme, h_mu, h_cov, K, eigenvalues, fve, sigma2, ...
    mean.csv              t,c1..cD
    eigenfunctions.csv    k,t,c1..cD            every retained eigenpair
    eigenvalues.csv       k,eigenvalue,fve
    covariance_diag.csv   t,g1_1..gD_D          entries of the surface at (t, t)
    scores.csv            subject_id,xi1..xiK
    trajectories.csv      subject_id,t,c1..cD   reconstructions with K components
    gcv.csv               h,gcv                 only when the bandwidth was selected by GCV
    summary.md            human-readable digest
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

import rpace
from rpace.core.errors import InvalidInputError, ParseError
from rpace.estimation.covariance import CovarianceModel, fve
from rpace.estimation.mean import MeanCurve
from rpace.estimation.pace import FitResult, reconstruct
from rpace.geometry import Manifold, get_manifold
from rpace.reporting.md import Section, bullets, table, write_report
from rpace.simulation.study import STUDY_COLUMNS, StudyResult

SCHEMA_VERSION = 1


def _num(x: float) -> str:
    return repr(float(x))


def _write_table(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_num(c) if isinstance(c, (float, np.floating)) else c for c in r])
    except OSError as exc:
        raise InvalidInputError(f"cannot write {path}: {exc}") from None
    return path


def _read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    if not path.exists():
        raise ParseError(f"missing run file {path}", 0)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None) or []
        return header, [row for row in reader if row]


def _coord_header(D: int) -> list[str]:
    return [f"c{k}" for k in range(1, D + 1)]


def fit_summary(result: FitResult, source: str | None = None) -> dict[str, object]:
    model = result.model
    return {
        "schema_version": SCHEMA_VERSION,
        "version": rpace.version,
        "method": result.method,
        "source": source,
        "manifold": result.curve.manifold.describe(),
        "projection": result.projection.describe() if result.projection else None,
        "scheme": result.config.scheme.value,
        "h_mu": result.bandwidth_mean,
        "h_cov": result.bandwidth_cov,
        "K": result.n_components,
        "eigenvalues": [float(x) for x in model.eigenvalues],
        "fve": [float(x) for x in model.fve],
        "sigma2": model.sigma2,
        "sigma2_floored": model.sigma2_floored,
        "degenerate_covariance": model.degenerate,
        "n_subjects": len(result.subject_ids),
        "grid_size": int(model.grid.size),
        "clamped_nodes": int(result.clamped.sum()),
        "tangent_projection": result.config.tangent_projection,
        "config": result.config.describe(),
    }


def _trajectory_rows(ids: Sequence[str], grid: np.ndarray, traj: np.ndarray):
    for sid, path in zip(ids, traj):
        for t, x in zip(grid, path):
            yield [sid, float(t), *map(float, x)]


def emit_fit(result: FitResult, out_dir: str | Path, *, source: str | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, curve = result.model, result.curve
    grid = model.grid
    D = curve.points.shape[1]
    summary = fit_summary(result, source)
    written = []

    path = out / "summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(path)
    written.append(_write_table(out / "mean.csv", ["t", *_coord_header(D)], ([float(t), *map(float, p)] for t, p in zip(grid, curve.points))))
    written.append(
        _write_table(
            out / "eigenfunctions.csv",
            ["k", "t", *_coord_header(D)],
            ([k + 1, float(t), *map(float, phi)] for k in range(model.n_available) for t, phi in zip(grid, model.eigenfunctions[k])),
        )
    )
    written.append(
        _write_table(
            out / "eigenvalues.csv",
            ["k", "eigenvalue", "fve"],
            ([k + 1, float(lam), float(f)] for k, (lam, f) in enumerate(zip(model.eigenvalues, model.fve))),
        )
    )
    diag = model.diagonal().reshape(grid.size, -1)
    written.append(
        _write_table(
            out / "covariance_diag.csv",
            ["t", *[f"g{i}_{j}" for i in range(1, D + 1) for j in range(1, D + 1)]],
            ([float(t), *map(float, row)] for t, row in zip(grid, diag)),
        )
    )
    K = result.n_components
    written.append(
        _write_table(
            out / "scores.csv",
            ["subject_id", *[f"xi{k}" for k in range(1, K + 1)]],
            ([sid, *map(float, xi)] for sid, xi in zip(result.subject_ids, result.scores.scores)),
        )
    )
    written.append(
        _write_table(out / "trajectories.csv", ["subject_id", "t", *_coord_header(D)], _trajectory_rows(result.subject_ids, grid, result.trajectories))
    )
    if result.gcv is not None:
        written.append(_write_table(out / "gcv.csv", ["h", "gcv"], result.gcv.rows()))
    written.append(write_report(out, "summary.md", f"RPACE fit ({result.method})", fit_sections(summary)))
    return written


def fit_sections(summary: dict) -> list[Section]:
    eig = summary["eigenvalues"][:10]
    rows = [[k + 1, lam, 100.0 * f] for k, (lam, f) in enumerate(zip(eig, summary["fve"]))]
    manifold = summary["manifold"]
    return [
        Section(
            "Setup",
            bullets(
                [
                    f"manifold: {manifold['kind']} (d={manifold['dim']}, D={manifold['ambient_dim']})",
                    f"subjects: {summary['n_subjects']}",
                    f"scheme: {summary['scheme']}",
                    f"source: {summary['source'] or '-'}",
                ]
            ),
        ),
        Section(
            "Estimates",
            bullets(
                [
                    f"h_mu = {summary['h_mu']:.6g}, h_cov = {summary['h_cov']:.6g}",
                    f"K = {summary['K']}",
                    f"sigma2 = {summary['sigma2']:.6g}" + (" (floored)" if summary["sigma2_floored"] else ""),
                    f"clamped reconstruction nodes: {summary['clamped_nodes']}",
                ]
            ),
        ),
        Section("Leading eigenvalues", table(["k", "eigenvalue", "FVE %"], rows) if rows else "_none_"),
    ]


@dataclass(frozen=True)
class EmittedFit:
    summary: dict
    manifold: Manifold
    projection: Manifold | None
    grid: np.ndarray
    mean: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    subject_ids: list[str]
    scores: np.ndarray

    @property
    def K(self) -> int:
        return int(self.summary["K"])


def _manifold(desc: dict | None) -> Manifold | None:
    if desc is None:
        return None
    return get_manifold(desc["kind"], int(desc["ambient_dim"]))


def load_fit(run_dir: str | Path) -> EmittedFit:
    run = Path(run_dir)
    summary_path = run / "summary.json"
    if not summary_path.exists():
        raise ParseError(f"missing run file {summary_path}", 0)
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    manifold = _manifold(summary["manifold"])
    _, mean_rows = _read_table(run / "mean.csv")
    grid = np.array([float(r[0]) for r in mean_rows])
    mean = np.array([[float(x) for x in r[1:]] for r in mean_rows])
    _, eig_rows = _read_table(run / "eigenvalues.csv")
    eigenvalues = np.array([float(r[1]) for r in eig_rows])
    _, phi_rows = _read_table(run / "eigenfunctions.csv")
    phi = np.array([[float(x) for x in r[2:]] for r in phi_rows]).reshape(eigenvalues.size, grid.size, -1)
    _, score_rows = _read_table(run / "scores.csv")
    ids = [r[0] for r in score_rows]
    scores = np.array([[float(x) for x in r[1:]] for r in score_rows]).reshape(len(ids), -1)
    return EmittedFit(summary, manifold, _manifold(summary.get("projection")), grid, mean, eigenvalues, phi, ids, scores)


def reconstruct_run(run_dir: str | Path, out_path: str | Path | None = None, K: int | None = None) -> Path:
    """Recompute the trajectory table of an emitted fit from its scores, mean and eigenfunctions."""
    fitted = load_fit(run_dir)
    K = fitted.K if K is None else int(K)
    if K > fitted.scores.shape[1]:
        raise InvalidInputError(f"run has scores for {fitted.scores.shape[1]} components, asked for {K}")
    curve = MeanCurve(fitted.manifold, fitted.grid, fitted.mean, float(fitted.summary["h_mu"]))
    model = CovarianceModel(
        grid=fitted.grid,
        surface=np.empty((0,)),
        eigenvalues=fitted.eigenvalues,
        eigenfunctions=fitted.eigenfunctions,
        sigma2=float(fitted.summary["sigma2"]),
        quadrature=np.empty((0,)),
        bandwidth=float(fitted.summary["h_cov"]),
    )
    tangent = bool(fitted.summary.get("tangent_projection", True))
    traj = np.stack([reconstruct(xi, model, curve, K, tangent_projection=tangent).trajectory for xi in fitted.scores])
    if fitted.projection is not None:
        traj = fitted.projection.project(traj)
    out = Path(out_path) if out_path is not None else Path(run_dir) / "trajectories_reconstructed.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    D = fitted.mean.shape[1]
    return _write_table(out, ["subject_id", "t", *_coord_header(D)], _trajectory_rows(fitted.subject_ids, fitted.grid, traj))


def check_fve(eigenvalues: Sequence[float], reported: Sequence[float]) -> float:
    """Largest gap between reported FVE values and a recomputation from the eigenvalues."""
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size == 0 or not lam.sum() > 0:
        return 0.0
    return float(np.max(np.abs(fve(lam) - np.asarray(reported, dtype=float))))


def write_study(result: StudyResult, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [_write_table(out / "study.csv", STUDY_COLUMNS, (r.as_tuple() for r in result.rows))]
    meta = out / "study.json"
    meta.write_text(json.dumps(result.metadata, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    written.append(meta)
    rows = [[r.method, r.K, r.rmise, r.mc_se, r.n_fail] for r in result.rows]
    scen = result.metadata.get("scenario", {})
    written.append(
        write_report(
            out,
            "study.md",
            f"Simulation study {scen.get('name', '')} ({scen.get('manifold', '')})",
            [
                Section(
                    "Design",
                    bullets(
                        [
                            f"n = {scen.get('n')}, m_max = {scen.get('m_max')}, sigma2 = {scen.get('sigma2')}",
                            f"replicates = {scen.get('replicates')}, seed = {result.metadata.get('seed')}",
                            f"RMISE normalization: {scen.get('rmise_normalization')}, SO(3) distance: {scen.get('so3_distance')}",
                        ]
                    ),
                ),
                Section("RMISE", table(["method", "K", "RMISE", "MC SE", "failures"], rows)),
            ],
        )
    )
    return written
