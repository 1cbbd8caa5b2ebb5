import json

import numpy as np
import pytest

from regtrig.cli import main
from regtrig.csvio import read_csv, verify_files, write_events_csv, write_trajectory_csv
from regtrig.executive import run_closed_loop, scenario_from_config

SCEN = dict(model=dict(name="example_4_2", c=1, k1=1, k2=3), theta_true=[2.0], thetahat0=[0.0],
            x0=[1.0, 1.0], T=1.0, a_coeff=0.1, Ntilde=2, t_final=4.0)


@pytest.fixture(scope="module")
def result():
    return run_closed_loop(scenario_from_config(SCEN))


def test_trajectory_columns_and_flags(result, tmp_path):
    path = tmp_path / "traj.csv"
    write_trajectory_csv(result, path)
    header = path.read_text().splitlines()[0].split(",")
    assert header == ["t", "x_1", "x_2", "u_1", "thetahat_1", "V", "threshold", "event_flag"]
    cols = read_csv(path)
    assert np.all(np.diff(cols["t"]) > 0)
    flagged = cols["t"][cols["event_flag"] == 1]
    assert flagged.tolist() == [rec.t for rec in result.records]
    # the event row carries the post-event estimate
    k = int(np.flatnonzero(cols["event_flag"] == 1)[0])
    assert cols["thetahat_1"][k] == result.records[0].thetahat[0]
    assert cols["thetahat_1"][k - 1] == 0.0


def test_events_csv_dump(result, tmp_path):
    path = tmp_path / "events.csv"
    write_events_csv(result, path)
    ev = read_csv(path)
    assert ev["cause"].tolist() == [rec.cause for rec in result.records]
    assert np.allclose(ev["G_11"], [rec.gram.G[0, 0] for rec in result.records], rtol=0, atol=0)
    assert ev["rank"].tolist() == [float(rec.rank) for rec in result.records]


def test_verify_files_from_disk(result, tmp_path):
    tp, ep = tmp_path / "t.csv", tmp_path / "e.csv"
    write_trajectory_csv(result, tp)
    write_events_csv(result, ep)
    checks = verify_files(ep, tp, T=1.0, theta_true=[2.0])
    names = {c.name for c in checks}
    assert {"lyapunov_bound", "dwell_cap", "jump_bound", "growth_bound", "gram_consistency",
            "post_id_constancy", "post_id_spacing"} <= names
    assert all(c.passed for c in checks)


def test_verify_detects_tampering(result, tmp_path):
    tp, ep = tmp_path / "t.csv", tmp_path / "e.csv"
    write_trajectory_csv(result, tp)
    write_events_csv(result, ep)
    lines = ep.read_text().splitlines()
    header = lines[0].split(",")
    j = header.index("thetahat_1")
    row = lines[2].split(",")
    row[j] = "40.0"
    lines[2] = ",".join(row)
    ep.write_text("\n".join(lines) + "\n")
    checks = {c.name: c for c in verify_files(ep, tp, T=1.0, theta_true=[2.0])}
    assert not checks["jump_bound"].passed


def write_config(tmp_path, **extra):
    doc = dict(SCEN)
    doc["output"] = {"trajectory_csv": str(tmp_path / "traj.csv"),
                     "events_csv": str(tmp_path / "events.csv"),
                     "plot_svg": str(tmp_path / "run.svg")}
    doc.update(extra)
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(doc))
    return path


def test_cli_simulate_verify_plot(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["simulate", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "ThresholdHit" in out and "PASS" in out
    assert (tmp_path / "run.svg").read_text().lstrip().startswith("<?xml")
    assert main(["verify", str(tmp_path / "events.csv"), str(tmp_path / "traj.csv"),
                 "--T", "1", "--theta-true", "2"]) == 0
    assert main(["plot", str(tmp_path / "traj.csv"), "-o", str(tmp_path / "again.svg")]) == 0
    assert (tmp_path / "again.svg").exists()


def test_cli_rejects_bad_config(tmp_path, capsys):
    cfg = write_config(tmp_path, T=-1)
    assert main(["simulate", str(cfg)]) == 2
    assert "T" in capsys.readouterr().err


def test_cli_check_observability(tmp_path, capsys):
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"model": {"name": "example_4_2", "c": 1, "k1": 1, "k2": 3}}))
    summary = tmp_path / "summary.json"
    assert main(["check-observability", str(good), "--draws", "3", "--summary", str(summary)]) == 0
    assert "certified" in capsys.readouterr().out
    data = json.loads(summary.read_text())
    assert data["certified_all"] and len(data["reports"]) == 3

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"model": {"name": "example_4_2", "c": 1, "k1": 1, "k2": 2}}))
    assert main(["check-observability", str(bad), "--draws", "2", "--json"]) == 1
    data = json.loads(capsys.readouterr().out)
    assert not data["certified_all"]
    w = data["reports"][0]["steps"][0]["certificates"]["1"]["witness"]
    assert abs(w[0] + w[1]) < 1e-10


def test_cli_polynomial_model_file(tmp_path, capsys):
    model = {"n": 3, "m": 1, "l": 2, "rows": [2, 3],
             "f": ["x2", "x1^2 + x3", "u1"], "g": ["x2", "x1^2"],
             "k": ["-x1 - 2*x2 - 2*x1*x2 - (z1 + 3)*(x1^2 + z1*x2 + x3) - z2*x1^2"]}
    (tmp_path / "m.json").write_text(json.dumps(model))
    cfg = tmp_path / "obs.json"
    cfg.write_text(json.dumps({"model_file": "m.json", "J": 5}))
    assert main(["check-observability", str(cfg), "--draws", "2"]) == 0
    out = capsys.readouterr().out
    assert "index sets [[2], [1, 2]]" in out or "index sets [[2], [1]]" in out
