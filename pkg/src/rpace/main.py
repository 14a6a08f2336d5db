from __future__ import annotations

import argparse
import logging
from dataclasses import replace
from pathlib import Path

from rpace.config import RunConfig, load_run_config, load_scenarios
from rpace.core import log
from rpace.core.errors import RpaceError, stage
from rpace.data.ingest import ingest_csv, write_dataset_csv
from rpace.data.transforms import TRANSFORMS, transform_csv
from rpace.estimation.pace import fit
from rpace.reporting.alerts import write_failure_report
from rpace.reporting.emit import emit_fit, reconstruct_run, write_study
from rpace.simulation.scenarios import SCENARIOS, generate, scenario_config
from rpace.simulation.study import run_study

logger = logging.getLogger("rpace.main")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rpace")
    p.add_argument("--config", default="config/rpace.yaml", help="YAML run defaults")
    p.add_argument("--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    f = sub.add_parser("fit", help="Fit RPACE to a subject_id,time,c1..cD file")
    f.add_argument("--input", required=True)
    f.add_argument("--out", default=None, help="Run directory (default runs/fit_<input stem>)")
    f.add_argument("--manifold", choices=["sphere", "so3", "euclidean"], default=None)
    f.add_argument("--scheme", choices=["OBS", "SUBJ", "INTM"], default=None)
    trunc = f.add_mutually_exclusive_group()
    trunc.add_argument("--fve", type=float, default=None, help="FVE threshold in (0, 1)")
    trunc.add_argument("--n-components", type=int, default=None)
    f.add_argument("--h-mean", type=float, default=None)
    f.add_argument("--h-cov", type=float, default=None)
    f.add_argument("--grid-size", type=int, default=None)
    f.add_argument("--no-tangent-projection", action="store_true")
    f.add_argument("--project-on-ingest", action="store_true")
    f.add_argument("--time-format", choices=["numeric", "date"], default=None)
    f.add_argument("--time-origin", default=None, help="ISO date used as day 0 with --time-format date")

    s = sub.add_parser("simulate", help="Run the Monte Carlo study")
    s.add_argument("--scenario", type=int, choices=sorted(SCENARIOS), default=1)
    s.add_argument("--preset", default=None, help="Named preset from config/scenarios.yaml")
    s.add_argument("--scenarios-config", default="config/scenarios.yaml")
    s.add_argument("--manifold", choices=["S2", "SO3"], default="S2")
    s.add_argument("--replicates", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--sigma2", type=float, default=None)
    s.add_argument("--k-max", type=int, default=6)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--rmise-normalization", choices=["ambient", "intrinsic"], default=None)
    s.add_argument("--so3-distance", choices=["frobenius", "angle"], default=None)
    s.add_argument("--export-data", default=None, help="Also write one generated dataset to this CSV")
    s.add_argument("--out", default="reports/study")

    t = sub.add_parser("transform", help="Map raw rows onto the sphere")
    t.add_argument("--kind", choices=sorted(TRANSFORMS), required=True)
    t.add_argument("--input", required=True)
    t.add_argument("--output", required=True)

    r = sub.add_parser("reconstruct", help="Recompute trajectories from an emitted fit")
    r.add_argument("--run", required=True)
    r.add_argument("--out", default=None)
    r.add_argument("--k", type=int, default=None)
    return p


def _apply_fit_flags(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    overrides = {
        "manifold": args.manifold,
        "scheme": args.scheme,
        "bandwidth_mean": args.h_mean,
        "bandwidth_cov": args.h_cov,
        "grid_size": args.grid_size,
        "time_format": args.time_format,
        "time_origin": args.time_origin,
        "input_path": args.input,
        "output_path": args.out,
    }
    cfg = replace(cfg, command="fit", **{k: v for k, v in overrides.items() if v is not None})
    if args.fve is not None:
        cfg = replace(cfg, fve_threshold=args.fve, n_components=None)
    if args.n_components is not None:
        cfg = replace(cfg, n_components=args.n_components, fve_threshold=None)
    if args.no_tangent_projection:
        cfg = replace(cfg, tangent_projection=False)
    if args.project_on_ingest:
        cfg = replace(cfg, project_on_ingest=True)
    return cfg.validate()


def _cmd_fit(cfg: RunConfig, out: Path) -> int:
    with stage("ingest"):
        data = ingest_csv(
            cfg.input_path,
            cfg.manifold,
            project_on_ingest=cfg.project_on_ingest,
            time_format=cfg.time_format,
            time_origin=cfg.time_origin,
        )
    result = fit(data, cfg.fit_config())
    with stage("emit"):
        paths = emit_fit(result, out, source=str(cfg.input_path))
    for path in paths:
        print(f"[OK] {path}")
    print(f"[FIT] K={result.n_components} h_mu={result.bandwidth_mean:.6g} sigma2={result.model.sigma2:.6g}", flush=True)
    return 0


def _cmd_simulate(cfg: RunConfig, args: argparse.Namespace, out: Path) -> int:
    if args.preset:
        presets = load_scenarios(args.scenarios_config)
        if args.preset not in presets:
            raise SystemExit(f"[GUARD] unknown preset {args.preset!r}; available: {sorted(presets)}")
        scenario = presets[args.preset]
    else:
        scenario = scenario_config(args.scenario, args.manifold, seed=cfg.seed)
    overrides = {
        "replicates": args.replicates,
        "seed": args.seed,
        "sigma2": args.sigma2,
        "rmise_normalization": args.rmise_normalization,
        "so3_distance": args.so3_distance,
    }
    scenario = replace(scenario, **{k: v for k, v in overrides.items() if v is not None})
    workers = args.workers or cfg.workers
    if args.export_data:
        data, _ = generate(scenario)
        print(f"[OK] {write_dataset_csv(data, args.export_data)}")
    with stage("study"):
        result = run_study(scenario, range(1, args.k_max + 1), workers=workers, grid_size=cfg.grid_size)
        paths = write_study(result, out)
    for path in paths:
        print(f"[OK] {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    log.configure(args.verbose)

    out: Path | None = None
    try:
        cfg = load_run_config(args.config)

        if args.cmd == "fit":
            cfg = _apply_fit_flags(cfg, args)
            out = Path(cfg.output_path or f"runs/fit_{Path(cfg.input_path).stem}")
            return _cmd_fit(cfg, out)

        if args.cmd == "simulate":
            out = Path(args.out)
            return _cmd_simulate(cfg, args, out)

        if args.cmd == "transform":
            with stage("transform"):
                path = transform_csv(args.input, args.output, args.kind)
            print(f"[OK] {path}")
            return 0

        if args.cmd == "reconstruct":
            out = Path(args.run)
            with stage("reconstruct"):
                path = reconstruct_run(args.run, args.out, args.k)
            print(f"[OK] {path}")
            return 0
    except RpaceError as exc:
        print(f"[FAIL] {exc.describe()}", flush=True)
        if out is not None:
            try:
                print(f"[FAIL] report: {write_failure_report(out, args.cmd, exc)}")
            except OSError:
                logger.warning("could not write failure report under %s", out)
        return 1

    return 2


if __name__ == "__main__":
    raise SystemExit(main())
