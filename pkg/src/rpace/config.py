from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

import yaml

from rpace.core.errors import InvalidInputError
from rpace.estimation.covariance import TruncationRule
from rpace.estimation.pace import FitConfig
from rpace.estimation.smoothing import WeightScheme
from rpace.simulation.scenarios import SCENARIOS, ScenarioConfig, scenario_config

COMMANDS = ("fit", "simulate", "transform", "reconstruct")


def _env_int(name: str, default: int) -> int:
    try:
        return int(os.getenv(name, str(default)).strip())
    except Exception:
        return default


def _env_float(name: str, default: float) -> float:
    try:
        return float(os.getenv(name, str(default)).strip())
    except Exception:
        return default


@dataclass
class RunConfig:
    command: str | None = None
    manifold: str = "sphere"
    scheme: str = "OBS"
    fve_threshold: float | None = 0.95
    n_components: int | None = None
    bandwidth_mean: float | None = None
    bandwidth_cov: float | None = None
    cov_bandwidth_factor: float = 2.0
    grid_size: int = 51
    gcv_candidates: int = 10
    tangent_projection: bool = True
    project_on_ingest: bool = False
    time_format: str = "numeric"
    time_origin: str | None = None
    seed: int = 0
    workers: int = 1
    input_path: str | None = None
    output_path: str | None = None
    verbose: bool = False

    def validate(self) -> "RunConfig":
        if self.command is not None and self.command not in COMMANDS:
            raise InvalidInputError(f"unknown command {self.command!r}")
        if self.n_components is not None:
            self.fve_threshold = None
        if (self.fve_threshold is None) == (self.n_components is None):
            raise InvalidInputError("set exactly one of fve_threshold or n_components")
        WeightScheme.parse(self.scheme)
        if self.grid_size < 2 or self.gcv_candidates < 1 or self.workers < 1:
            raise InvalidInputError("grid_size >= 2, gcv_candidates >= 1 and workers >= 1 are required")
        return self

    def fit_config(self) -> FitConfig:
        self.validate()
        return FitConfig(
            scheme=WeightScheme.parse(self.scheme),
            truncation=TruncationRule(self.fve_threshold, self.n_components),
            bandwidth_mean=self.bandwidth_mean,
            bandwidth_cov=self.bandwidth_cov,
            cov_bandwidth_factor=self.cov_bandwidth_factor,
            grid_size=self.grid_size,
            gcv_candidates=self.gcv_candidates,
            tangent_projection=self.tangent_projection,
        )


def _read_yaml(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        return {}
    data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise InvalidInputError(f"{p}: expected a mapping at the top level")
    return data


def load_run_config(path: str | Path = "config/rpace.yaml") -> RunConfig:
    """Defaults, then the YAML file (if present), then RPACE_* environment overrides."""
    data = _read_yaml(path)
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise InvalidInputError(f"{path}: unknown keys {unknown}")
    cfg = RunConfig(**data)
    cfg = replace(
        cfg,
        grid_size=_env_int("RPACE_GRID_SIZE", cfg.grid_size),
        workers=_env_int("RPACE_WORKERS", cfg.workers),
        cov_bandwidth_factor=_env_float("RPACE_COV_FACTOR", cfg.cov_bandwidth_factor),
    )
    return cfg


def load_scenarios(path: str | Path = "config/scenarios.yaml") -> dict[str, ScenarioConfig]:
    """Named scenario presets; built-in scenario-1/2/3 on S2 and SO3 when the file is absent."""
    data = _read_yaml(path)
    replicates = _env_int("RPACE_REPLICATES", 0)
    out: dict[str, ScenarioConfig] = {}
    if not data:
        for number in SCENARIOS:
            for manifold in ("S2", "SO3"):
                cfg = scenario_config(number, manifold)
                out[f"{cfg.name}-{manifold.lower()}"] = cfg
    else:
        for name, payload in (data.get("scenarios") or {}).items():
            try:
                out[name] = ScenarioConfig(name=name, **(payload or {}))
            except TypeError as exc:
                raise InvalidInputError(f"scenario {name!r}: {exc}") from None
    if replicates > 0:
        out = {k: replace(v, replicates=replicates) for k, v in out.items()}
    return out
