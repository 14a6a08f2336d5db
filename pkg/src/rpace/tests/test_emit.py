from __future__ import annotations

import json

import numpy as np
import pytest

from rpace.core.errors import InvalidInputError, ParseError, ValidationError
from rpace.estimation.covariance import TruncationRule
from rpace.estimation.pace import FitConfig, fit
from rpace.reporting.alerts import write_failure_report
from rpace.reporting.emit import check_fve, emit_fit, load_fit, reconstruct_run, write_study
from rpace.reporting.md import Section, document, fmt, table
from rpace.simulation.scenarios import ScenarioConfig, generate
from rpace.simulation.study import extrinsic_baseline, run_study

FILES = {
    "summary.json",
    "mean.csv",
    "eigenfunctions.csv",
    "eigenvalues.csv",
    "covariance_diag.csv",
    "scores.csv",
    "trajectories.csv",
    "summary.md",
}


@pytest.fixture(scope="module")
def sphere_data():
    data, _ = generate(ScenarioConfig(n=30, m_max=10, seed=1))
    return data


def test_emit_constant_fit(tmp_path, constant_sphere_data):
    data, p = constant_sphere_data
    res = fit(data, FitConfig(bandwidth_mean=0.3, grid_size=11))
    written = emit_fit(res, tmp_path / "run", source="const.csv")
    assert {w.name for w in written} == FILES
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert summary["K"] == 1 and summary["degenerate_covariance"] and summary["sigma2_floored"]
    fitted = load_fit(tmp_path / "run")
    np.testing.assert_array_equal(fitted.scores, 0.0)
    np.testing.assert_allclose(fitted.mean, np.tile(p, (11, 1)), atol=1e-14)
    assert fitted.subject_ids == data.ids


@pytest.mark.parametrize("method", ["rpace", "extrinsic"])
def test_reconstruction_is_byte_identical(tmp_path, sphere_data, method):
    cfg = FitConfig(truncation=TruncationRule(None, 2), bandwidth_mean=0.15)
    res = fit(sphere_data, cfg) if method == "rpace" else extrinsic_baseline(sphere_data, cfg)
    run = tmp_path / method
    written = {w.name for w in emit_fit(res, run)}
    assert "gcv.csv" not in written
    out = reconstruct_run(run)
    assert out.name == "trajectories_reconstructed.csv"
    assert out.read_bytes() == (run / "trajectories.csv").read_bytes()
    summary = json.loads((run / "summary.json").read_text())
    assert summary["method"] == method
    assert check_fve(summary["eigenvalues"], summary["fve"]) <= 1e-12
    with pytest.raises(InvalidInputError):
        reconstruct_run(run, K=3)
    shorter = reconstruct_run(run, tmp_path / "k1.csv", K=1)
    assert shorter.read_bytes() != out.read_bytes()


def test_gcv_table_written(tmp_path, sphere_data):
    res = fit(sphere_data, FitConfig(truncation=TruncationRule(None, 2), grid_size=21))
    emit_fit(res, tmp_path / "gcv")
    lines = (tmp_path / "gcv" / "gcv.csv").read_text().splitlines()
    assert lines[0] == "h,gcv" and len(lines) == 1 + res.gcv.candidates.size


def test_load_fit_missing_run(tmp_path):
    with pytest.raises(ParseError):
        load_fit(tmp_path / "nowhere")


def test_write_study(tmp_path):
    result = run_study(ScenarioConfig(n=50, m_max=15, replicates=1, seed=6, name="one"), [1])
    paths = write_study(result, tmp_path / "study")
    assert [p.name for p in paths] == ["study.csv", "study.json", "study.md"]
    rows = (tmp_path / "study" / "study.csv").read_text().splitlines()
    assert rows[0] == "method,manifold,scenario,K,rmise,mc_se,n_fail"
    assert len(rows) == 3 and rows[1].startswith("rpace,S2,one,1,")
    meta = json.loads((tmp_path / "study" / "study.json").read_text())
    assert meta["scenario"]["name"] == "one"
    assert "| rpace |" in (tmp_path / "study" / "study.md").read_text()


def test_failure_report(tmp_path):
    exc = ValidationError("2 row(s) violate sphere invariants", offenders=[4, 9])
    exc.stage = "ingest"
    path = write_failure_report(tmp_path, "fit", exc)
    text = path.read_text()
    assert path.name == "FAILED.md"
    assert text.startswith("# fit failed at stage ingest")
    assert "offender: 9" in text and "--project-on-ingest" in text


def test_markdown_helpers():
    assert fmt(0.5) == "0.5000" and fmt(1e-6) == "1.000e-06" and fmt(None) == "" and fmt(3) == "3"
    md = table(["k", "name"], [[1, "a|b"]])
    assert "| ---: | --- |" in md and "a\\|b" in md
    doc = document("T", [Section("S", "body\n"), Section("", "tail")])
    assert doc == "# T\n\n## S\n\nbody\n\ntail\n"
