import csv
import json
import math
import os
import subprocess
import sys

import pytest

from oco_s2 import output
from oco_s2.cli import main
from oco_s2.config import Config, load_config
from oco_s2.experiments import RECORD_COLUMNS
from oco_s2.lti import ConfigurationError


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


def _read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_run_minimal(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--out", str(out)]) == 0
    assert {"manifest.json", "trajectory.csv", "report.json"} <= set(_files(out))
    rep = json.loads((out / "report.json").read_text())
    assert math.isfinite(rep["final_regret"])
    assert rep["comm_total"] == 2000
    man = json.loads((out / "manifest.json").read_text())
    assert man["seeds"] == [0, 1, 2, 3, 4]
    assert man["constants_audit"]["H"] == 104
    rows = _read_csv(out / "trajectory.csv")
    assert len(rows) == 200 and rows[0]["u1"] == "0.5"


def test_run_is_byte_identical(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--out", str(out), "--seed", "3"]) == 0
    first = _files(out)
    assert main(["run", "--out", str(out), "--seed", "3"]) == 0
    assert _files(out) == first


def test_prediction_zero_matches_plain(tmp_path):
    for seed in (0, 1):
        a, b = tmp_path / f"a{seed}", tmp_path / f"b{seed}"
        assert main(["run", "--out", str(a), "--seed", str(seed)]) == 0
        assert main(["run", "--out", str(b), "--seed", str(seed), "--variant", "prediction", "--predictions", "zero"]) == 0
        ra = json.loads((a / "report.json").read_text())
        rb = json.loads((b / "report.json").read_text())
        assert ra["final_regret"] == rb["final_regret"]
        assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()


def test_json_format(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--out", str(out), "--format", "json"]) == 0
    traj = json.loads((out / "trajectory.json").read_text())
    assert len(traj) == 200 and traj[0]["t"] == 1


def test_sweep_single_setting(tmp_path):
    out = tmp_path / "o"
    assert main(["sweep", "k", "--grid", "1", "--seeds", "2", "--out", str(out)]) == 0
    rows = _read_csv(out / "records.csv")
    assert list(rows[0]) == list(RECORD_COLUMNS)
    assert {r["setting"] for r in rows} == {"K=1"}
    assert len(rows) == 2
    summ = _read_csv(out / "summary.csv")
    assert list(summ[0]) == ["setting", "metric", "mean", "std", "n"]
    assert len({r["setting"] for r in summ if r["metric"] == "final_regret"}) == 1


def test_sweep_summary_rows_match_grid(tmp_path):
    out = tmp_path / "o"
    assert main(["sweep", "participation", "--grid", "2,10", "--seeds", "2", "--out", str(out), "--format", "json"]) == 0
    recs = json.loads((out / "records.json").read_text())
    assert len(recs) == 4 and set(recs[0]) == set(RECORD_COLUMNS)
    summ = _read_csv(out / "summary.csv")
    assert len([r for r in summ if r["metric"] == "final_regret"]) == 2
    diag = _read_csv(out / "comparator_diagnostics.csv")
    assert len(diag) == 2


def test_svg_is_optional_plumbing(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    pytest.importorskip("matplotlib")
    assert main(["sweep", "k", "--grid", "1,10", "--seeds", "1", "--out", str(a)]) == 0
    assert main(["sweep", "k", "--grid", "1,10", "--seeds", "1", "--out", str(b), "--svg"]) == 0
    fa, fb = _files(a), _files(b)
    svg = fb.pop("sweep_k.svg")
    assert svg.startswith(b"<?xml")
    # Apart from the svg flag in the recorded config, nothing else changes.
    fa.pop("manifest.json"), fb.pop("manifest.json")
    assert fa == fb
    assert main(["sweep", "k", "--grid", "1,10", "--seeds", "1", "--out", str(b), "--svg"]) == 0
    assert (b / "sweep_k.svg").read_bytes() == svg


def test_comparator_check(tmp_path):
    out = tmp_path / "o"
    assert main(["comparator-check", "--out", str(out)]) == 0
    rows = _read_csv(out / "comparator_diagnostics.csv")
    assert len(rows) == 5 and all(r["success"] == "true" for r in rows)
    for r in rows:
        for k in ("max_dynamics_residual", "max_box_violation", "max_path_budget_violation", "max_relative_objective_mismatch"):
            assert float(r[k]) >= 0
    summ = _read_csv(out / "comparator_summary.csv")
    assert len(summ) == 1 and float(summ[0]["success"]) == 1.0
    assert len(summ[0]) == 8


def test_comparator_zero_budget(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"comparator": {"budget_fraction": 0.0}}))
    out = tmp_path / "o"
    assert main(["comparator-check", "--config", str(cfg), "--seeds", "2", "--out", str(out)]) == 0
    for r in _read_csv(out / "comparator_diagnostics.csv"):
        assert float(r["budget_slack"]) == 0.0 and float(r["path_length"]) == 0.0


def test_bound_report_full_participation(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"learner": {"m": 10, "seeds": 2}}))
    out = tmp_path / "o"
    assert main(["bound-report", "--config", str(cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "bound_report.json").read_text())
    (entry,) = rep["settings"]
    assert entry["participation_term"] == 0.0
    assert entry["per_seed"][0]["theory"]["participation"] == 0.0
    assert entry["mean_regret"] <= entry["mean_bound_rhs"]
    assert entry["bound_dominates"] is True


def test_bound_report_per_setting(tmp_path):
    out = tmp_path / "o"
    assert main(["bound-report", "--grid", "1,200", "--seeds", "2", "--out", str(out)]) == 0
    rep = json.loads((out / "bound_report.json").read_text())
    assert [e["setting"] for e in rep["settings"]] == ["K=1", "K=200"]


def test_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"learner": {"eta_B": 1}}))
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["run", "--predictions", "psychic", "--variant", "prediction", "--out", str(tmp_path / "o")]) == 2
    assert main(["sweep", "k", "--grid", "0", "--out", str(tmp_path / "o")]) == 2
    assert main(["sweep", "k", "--grid", "a,b", "--out", str(tmp_path / "o")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["run", "--bogus"])
    assert exc.value.code == 2


def test_solver_failure_exit_3(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"comparator": {"max_iter": 3}, "learner": {"seeds": 1}}))
    assert main(["comparator-check", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 3
    assert (tmp_path / "r" / "report.json").exists()


def test_io_error_exit_4(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--out", str(blocker / "sub")]) == 4


def test_env_seed_override(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"learner": {"seed": 4}}))
    monkeypatch.setenv("OCO_S2_SEED", "9")
    assert load_config(str(cfg)).learner.seed == 9
    assert load_config(str(cfg), seed=2).learner.seed == 2
    monkeypatch.delenv("OCO_S2_SEED")
    assert load_config(str(cfg)).learner.seed == 4
    monkeypatch.setenv("OCO_S2_SEED", "x")
    with pytest.raises(ConfigurationError):
        load_config(str(cfg))


def test_config_defaults_and_explicit_matrices():
    c = Config.from_dict({})
    rc = c.run_config()
    assert (rc.T, rc.K, rc.eta, rc.m, rc.N, rc.alpha, rc.beta, rc.budget_fraction) == (200, 10, 0.04, 5, 10, 0.2, 0.8, 0.45)
    c = Config.from_dict({"model": {"A": [[0.5, 0.1], [0, 0.4]], "B": [[1, 0], [0, 1]], "E": [[1, 0], [0, 1]], "C_A": 2.0, "rho": 0.6}, "learner": {"m": 2}})
    assert c.system().n_x == 2 and c.run_config().N == 2
    with pytest.raises(ConfigurationError):
        Config.from_dict({"model": {"A": [[0.5]]}}).system()


def test_atomic_write_keeps_old_file(tmp_path, monkeypatch):
    target = tmp_path / "f.csv"
    output.write_atomic(target, "old\n")

    class Boom(Exception):
        pass

    real_replace = os.replace

    def failing_replace(src, dst):
        raise Boom()

    monkeypatch.setattr(os, "replace", failing_replace)
    with pytest.raises(Boom):
        output.write_atomic(target, "new\n")
    monkeypatch.setattr(os, "replace", real_replace)
    assert target.read_text() == "old\n"
    assert [p.name for p in tmp_path.iterdir()] == ["f.csv"]


def test_number_formatting():
    assert output.fmt(0.1) == "0.10000000000000001"
    assert output.fmt(None) == "" and output.fmt(True) == "true" and output.fmt(3) == "3"
    assert json.loads(output.json_text({"x": 0.1}))["x"] == 0.1
    assert json.loads(output.json_text({"x": float("inf")}))["x"] == "inf"


def test_help_lists_every_flag():
    res = subprocess.run([sys.executable, "-m", "oco_s2.cli", "sweep", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for flag in ("--config", "--seed", "--seeds", "--out", "--jobs", "--format", "--grid", "--variant", "--predictions", "--svg"):
        assert flag in res.stdout
    res = subprocess.run([sys.executable, "-m", "oco_s2.cli", "run", "--nope"], capture_output=True, text=True)
    assert res.returncode == 2
