import json

import numpy as np
import pytest

from tvepi.cli import main
from tvepi.dynamics import read_trajectory_csv
from tvepi.observation import read_dataset_csv
from tvepi.synthesis import read_paths_csv


def tree(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_simulate_summary_and_files(tmp_path, capsys):
    assert main(["simulate", "--scenario", "constant-sirq", "--seed", "7", "--out", str(tmp_path)]) == 0
    fields = dict(tok.split("=") for tok in capsys.readouterr().out.split() if "=" in tok)
    assert float(fields["R0_uncontrolled"]) == pytest.approx(10.0, rel=1e-12)
    assert float(fields["R0_controlled"]) == pytest.approx(3.0, rel=1e-12)
    assert sorted(tree(tmp_path)) == ["dataset.csv", "provenance.json", "trajectory.csv", "truth_paths.csv"]


def test_simulate_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["simulate", "--scenario", "tv-sirq", "--seed", "3", "--out", str(d)]) == 0
    assert tree(a) == tree(b)


def test_unknown_scenario_is_usage_error(tmp_path, capsys):
    assert main(["simulate", "--scenario", "seir", "--out", str(tmp_path)]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_subcommand_is_usage_error():
    assert main([]) == 2


def test_fit_constant_scenario(tmp_path):
    assert main(["fit", "--scenario", "constant-sirq", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    for key in ("loss", "restarts", "termination", "reproduction_numbers", "warnings"):
        assert key in report
    paths = read_paths_csv(tmp_path / "fitted_paths.csv")
    assert list(paths) == ["t", "beta", "gamma", "delta"]
    assert read_trajectory_csv(tmp_path / "fitted_trajectory.csv").kind.value == "SIRQ"
    assert (tmp_path / "trace.csv").read_text().startswith("restart,eval,best_value\n")


def test_fit_from_config_and_determinism(tmp_path):
    assert main(["simulate", "--scenario", "constant-sirq", "--out", str(tmp_path / "data")]) == 0
    cfg = {
        "model": "SIRQ",
        "population": 1000,
        "initial_infectious": 10,
        "grid": {"t0": 0.0, "horizon": 60.0, "n_steps": 60, "substeps_per_step": 10},
        "dataset": "data/dataset.csv",
    }
    (tmp_path / "objective.json").write_text(json.dumps(cfg))
    outs = []
    for name in ("fit1", "fit2"):
        args = ["fit", "--config", str(tmp_path / "objective.json"), "--out", str(tmp_path / name)]
        assert main(args) == 0
        outs.append(tree(tmp_path / name))
    assert outs[0] == outs[1]


def test_fit_with_empty_dataset_flags_underdetermination(tmp_path):
    (tmp_path / "empty.csv").write_text("kind,t,m,k\n")
    cfg = {"model": "SIR", "population": 1000, "initial_infectious": 10,
           "grid": {"horizon": 20.0, "n_steps": 20}, "dataset": "empty.csv"}
    (tmp_path / "objective.json").write_text(json.dumps(cfg))
    args = ["fit", "--config", str(tmp_path / "objective.json"), "--out", str(tmp_path / "fit"), "--starts", "1"]
    assert main(args) == 0
    report = json.loads((tmp_path / "fit" / "report.json").read_text())
    assert report["loss"] == 0.0
    assert any("underdetermined" in w for w in report["warnings"])


def test_malformed_config_exit_two(tmp_path, capsys):
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["fit", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o")]) == 2
    (tmp_path / "bad2.json").write_text(json.dumps({"model": "SIR"}))
    assert main(["fit", "--config", str(tmp_path / "bad2.json"), "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err


def test_sweep_flag_validation(tmp_path):
    base = ["lambda-sweep", "--scenario", "tv-sir", "--out", str(tmp_path)]
    assert main(base + ["--lambda", "3,1"]) == 2
    assert main(base + ["--lambda", "-1,2"]) == 2
    assert main(base + ["--lambda", "a,b"]) == 2
    assert main(["lambda-sweep", "--scenario", "constant-sirq", "--out", str(tmp_path)]) == 2


def test_small_sweep_outputs(tmp_path, capsys):
    args = ["lambda-sweep", "--scenario", "tv-sir", "--lambda", "0,10000", "--starts", "1",
            "--max-restarts", "1", "--out", str(tmp_path)]
    assert main(args) == 0
    table = capsys.readouterr().out
    assert "regime" in table and "selected lambda" in table
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("lambda,loss,nll,penalty,tv,deviance,dispersion")
    assert len(lines) == 3
    tv = [float(line.split(",")[4]) for line in lines[1:]]
    assert tv[1] <= tv[0] and tv[1] < 1e-3
    assert read_dataset_csv(tmp_path / "dataset.csv", "SIR").model.value == "SIR"


def test_reproduce_constant_reports_errors(tmp_path, capsys):
    assert main(["reproduce", "constant-sirq", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert ("PASS" in out) != ("FAIL" in out)
    assert "relative_error" in out
    verdict = json.loads((tmp_path / "report.json").read_text())["verdict"]
    assert set(verdict["relative_errors"]) == {"beta", "gamma", "delta"}
    np.testing.assert_array_equal(
        read_paths_csv(tmp_path / "truth_paths.csv")["beta"], np.full(60, 0.3)
    )
