from __future__ import annotations

import json

import pytest

from rpace.data.ingest import write_dataset_csv
from rpace.main import main
from rpace.simulation.scenarios import ScenarioConfig, generate


@pytest.fixture
def defaults(tmp_path):
    return ["--config", str(tmp_path / "no-config.yaml")]


@pytest.fixture
def sphere_csv(tmp_path):
    data, _ = generate(ScenarioConfig(n=30, m_max=10, seed=3))
    return write_dataset_csv(data, tmp_path / "sphere.csv")


def test_fit_then_reconstruct(tmp_path, defaults, sphere_csv, capsys):
    out = tmp_path / "run"
    code = main([*defaults, "fit", "--input", str(sphere_csv), "--out", str(out), "--h-mean", "0.15", "--n-components", "2", "--grid-size", "21"])
    assert code == 0
    printed = capsys.readouterr().out
    assert "[FIT] K=2 h_mu=0.15" in printed
    assert f"[OK] {out / 'summary.json'}" in printed
    summary = json.loads((out / "summary.json").read_text())
    assert summary["grid_size"] == 21 and summary["source"] == str(sphere_csv)

    assert main([*defaults, "reconstruct", "--run", str(out)]) == 0
    assert (out / "trajectories_reconstructed.csv").read_bytes() == (out / "trajectories.csv").read_bytes()


def test_fit_failure_writes_report(tmp_path, defaults, capsys):
    src = tmp_path / "bad.csv"
    src.write_text("subject_id,time,c1,c2,c3\na,0.1,0,0,1\na,0.2,0,0,1.5\n", encoding="utf-8")
    out = tmp_path / "failed"
    assert main([*defaults, "fit", "--input", str(src), "--out", str(out)]) == 1
    assert "[FAIL] stage=ingest" in capsys.readouterr().out
    report = (out / "FAILED.md").read_text()
    assert report.startswith("# fit failed at stage ingest")


def test_fit_truncation_flags_are_exclusive(tmp_path, defaults, sphere_csv):
    with pytest.raises(SystemExit) as err:
        main([*defaults, "fit", "--input", str(sphere_csv), "--fve", "0.9", "--n-components", "2"])
    assert err.value.code == 2


def test_fit_rejects_bad_fve(tmp_path, defaults, sphere_csv, capsys):
    assert main([*defaults, "fit", "--input", str(sphere_csv), "--out", str(tmp_path / "r"), "--fve", "1.5"]) == 1
    assert "InvalidInputError" in capsys.readouterr().out


def test_transform_command(tmp_path, defaults):
    src = tmp_path / "comp.csv"
    src.write_text("subject_id,time,c1,c2\na,0.0,0.25,0.75\na,1.0,1.0,0.0\n", encoding="utf-8")
    dst = tmp_path / "sphere.csv"
    assert main([*defaults, "transform", "--kind", "compositional", "--input", str(src), "--output", str(dst)]) == 0
    assert dst.read_text().splitlines()[0] == "subject_id,time,c1,c2"


def test_reconstruct_missing_run(tmp_path, defaults, capsys):
    assert main([*defaults, "reconstruct", "--run", str(tmp_path / "nothing")]) == 1
    assert "ParseError" in capsys.readouterr().out


def test_simulate_unknown_preset(tmp_path, defaults):
    with pytest.raises(SystemExit, match="GUARD"):
        main([*defaults, "simulate", "--preset", "nope", "--scenarios-config", str(tmp_path / "absent.yaml")])


def test_simulate_preset(tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("grid_size: 21\n", encoding="utf-8")
    presets = tmp_path / "scen.yaml"
    presets.write_text("scenarios:\n  tiny:\n    n: 50\n    m_max: 15\n    replicates: 1\n", encoding="utf-8")
    out = tmp_path / "study"
    export = tmp_path / "one.csv"
    code = main(
        [
            "--config", str(cfg),
            "simulate", "--preset", "tiny", "--scenarios-config", str(presets),
            "--k-max", "2", "--seed", "11", "--export-data", str(export), "--out", str(out),
        ]
    )
    assert code == 0
    assert export.exists()
    rows = (out / "study.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 2
    meta = json.loads((out / "study.json").read_text())
    assert meta["seed"] == 11 and meta["grid_size"] == 21
