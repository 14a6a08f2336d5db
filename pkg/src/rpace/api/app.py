from __future__ import annotations

import json
import os
from datetime import datetime
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import PlainTextResponse

import rpace
from rpace.core.errors import RpaceError
from rpace.reporting.emit import load_fit

APP_TITLE = "rpace results API"

app = FastAPI(title=APP_TITLE)


def _runs_dir() -> Path:
    return Path(os.getenv("RPACE_RUNS_DIR", "runs"))


def _run(name: str) -> Path:
    root = _runs_dir().resolve()
    run = (root / name).resolve()
    if run.parent != root or not (run / "summary.json").exists():
        raise HTTPException(status_code=404, detail=f"run not found: {name}")
    return run


def _summary(run: Path) -> dict:
    return json.loads((run / "summary.json").read_text(encoding="utf-8"))


@app.get("/health")
def health() -> dict:
    root = _runs_dir()
    return {
        "ok": True,
        "version": rpace.version,
        "runs_dir": str(root),
        "runs_dir_exists": root.exists(),
        "ts": datetime.now().isoformat(timespec="seconds"),
    }


@app.get("/runs")
def runs(limit: int = Query(50, ge=1, le=500)) -> dict:
    root = _runs_dir()
    names = sorted(p.name for p in root.iterdir() if (p / "summary.json").exists()) if root.exists() else []
    rows = []
    for name in names[:limit]:
        s = _summary(root / name)
        rows.append({"name": name, "method": s.get("method"), "manifold": s["manifold"]["kind"], "K": s.get("K")})
    return {"limit": limit, "count": len(rows), "rows": rows}


@app.get("/runs/{name}/summary")
def run_summary(name: str) -> dict:
    return _summary(_run(name))


@app.get("/runs/{name}/mean")
def run_mean(name: str) -> dict:
    try:
        fitted = load_fit(_run(name))
    except RpaceError as exc:
        raise HTTPException(status_code=500, detail=str(exc)) from None
    return {"name": name, "grid": fitted.grid.tolist(), "points": fitted.mean.tolist()}


@app.get("/runs/{name}/scores")
def run_scores(name: str, limit: int = Query(100, ge=1, le=10000)) -> dict:
    try:
        fitted = load_fit(_run(name))
    except RpaceError as exc:
        raise HTTPException(status_code=500, detail=str(exc)) from None
    rows = [{"subject_id": sid, "scores": xi.tolist()} for sid, xi in zip(fitted.subject_ids, fitted.scores)][:limit]
    return {"name": name, "K": fitted.K, "count": len(rows), "rows": rows}


@app.get("/runs/{name}/report", response_class=PlainTextResponse)
def run_report(name: str) -> str:
    p = _run(name) / "summary.md"
    if not p.exists():
        raise HTTPException(status_code=404, detail=f"{p.name} not found for run {name}")
    return p.read_text(encoding="utf-8")
