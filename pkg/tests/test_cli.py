import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from carnot_sf.cli import main
from carnot_sf.experiments import ExperimentSpec, jsonable, run_experiment


def _spec(tmp_path, **d):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(d))
    return str(path)


def test_extremal_command_writes_outputs(tmp_path, capsys):
    out = tmp_path / "circle"
    code = main(["extremal", "--a0", "1,0", "--b", "1", "-T", "6.283185307179586",
                 "--dt", "1e-3", "-o", str(out)])
    assert code == 0
    for name in ("trajectory.csv", "control.csv", "states.csv", "report.json"):
        assert (out / name).is_file()
    rep = json.loads((out / "report.json").read_text())
    assert rep["tool"] == "carnot-sf" and rep["label"] == "extremal"
    assert rep["residual"]["extremal_within_tol"]
    assert abs(rep["endpoint"]["z"][0] - np.pi) < 1e-5
    header = next(csv.reader((out / "states.csv").open()))
    assert header == ["t", "a_1", "a_2", "b_1"]
    assert capsys.readouterr().out == ""


def test_extremal_report_is_byte_identical(tmp_path):
    args = ["extremal", "--norm", "linf", "--a0", "1 0.3", "--b", "1", "-T", "4", "--dt", "1e-3"]
    names = ("report.json", "trajectory.csv", "control.csv")
    main(args + ["-o", str(tmp_path)])
    first = [(tmp_path / name).read_bytes() for name in names]
    main(args + ["-o", str(tmp_path)])
    assert [(tmp_path / name).read_bytes() for name in names] == first
    rep = json.loads(first[0])
    assert rep["label"] == "selected extremal"


def test_extremal_to_stdout(capsys):
    assert main(["extremal", "--group", "free2:3", "--norm", "lp:3", "--a0", "1 0 0",
                 "--b", "0 0 0", "-T", "1", "--dt", "0.01"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["conserved"]["dual_norm_drift"] < 1e-12


def test_decay_and_blowdown_specs(tmp_path):
    spec = _spec(tmp_path, kind="decay", params={"a0": [1.0, 0.0], "b": [1.0], "T": 16.0, "dt": 1e-2},
                 output=str(tmp_path / "decay"))
    assert main(["run", spec]) == 0
    assert (tmp_path / "decay" / "decay_0.csv").is_file()

    rep = run_experiment(ExperimentSpec("blowdown", params={
        "a0": [1.0, 0.0], "b": [1.0], "T": 1024.0, "dt": 1e-2}))
    assert rep["passed"] and not rep["affine"]


def test_counterexample_spec(tmp_path):
    rep = run_experiment(ExperimentSpec("counterexample", norm="linf",
                                        params={"cells": 256, "levels": 1, "restarts": 2}))
    assert rep["passed"] and not rep["affine"]
    assert rep["verdict"].startswith("non-affine infinite-geodesic candidate")
    assert rep["unit_speed"]
    flat = run_experiment(ExperimentSpec("counterexample", norm="linf",
                                         params={"cells": 256, "levels": 1, "restarts": 2,
                                                 "eps": 0.0}))
    assert flat["affine"] and flat["verdict"].startswith("affine line verified")


def test_counterexample_rejects_strictly_convex_norms(tmp_path, capsys):
    spec = _spec(tmp_path, kind="counterexample", norm="euclidean")
    assert main(["run", spec]) == 2
    assert "strictly convex" in capsys.readouterr().err


def test_counterexample_rejects_non_flat_directions():
    with pytest.raises(ValueError, match="not constant"):
        run_experiment(ExperimentSpec("counterexample", norm="linf",
                                      params={"X": [1.0, 0.0], "Y": [1.0, 0.0]}))


def test_submetry_and_sublinear_specs(tmp_path):
    rep = run_experiment(ExperimentSpec("submetry", norm="linf",
                                        params={"n_samples": 4, "restarts": 2}))
    assert rep["passed"] and len(rep["gaps"]) == 4
    out = tmp_path / "sub"
    rep = run_experiment(ExperimentSpec("sublinear", params={
        "h": {"x": [0.0, 0.0], "z": [1.0]}, "t_ladder": [1.0, 2.0, 4.0, 8.0, 16.0],
        "restarts": 2}, output=str(out)))
    assert rep["passed"] and rep["same_direction"]
    assert len(list(csv.reader((out / "ratios.csv").open()))) == 6


def test_bad_inputs_exit_with_code_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    assert main(["run", _spec(tmp_path, kind="teleport")]) == 2
    assert main(["run", _spec(tmp_path, kind="extremal", colour="red")]) == 2
    assert main(["extremal", "--a0", "1,0", "--b", "1", "--dt", "0"]) == 2
    assert main(["extremal", "--norm", "sup", "--a0", "1,0", "--b", "1"]) == 2
    assert capsys.readouterr().err.count("carnot-sf: error:") == 5


def test_suite_subset_is_deterministic(tmp_path):
    args = ["suite", "--only", "criterion_1", "criterion_2", "invariant_stratification"]
    assert main(args + ["-o", str(tmp_path)]) == 0
    a = (tmp_path / "report.json").read_bytes()
    assert main(args + ["-o", str(tmp_path)]) == 0
    assert a == (tmp_path / "report.json").read_bytes()
    rep = json.loads(a)
    assert sorted(rep["checks"]) == ["criterion_1", "criterion_2", "invariant_stratification"]
    assert rep["failed"] == []


def test_unknown_suite_check_is_an_error(capsys):
    assert main(["suite", "--only", "criterion_42"]) == 2


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "carnot_sf.cli", "extremal", "--a0", "0 1",
                           "--b", "0", "-T", "1", "--dt", "0.1"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["endpoint"]["x"] == pytest.approx([0.0, 1.0])


def test_jsonable_reports_non_finite_values():
    assert jsonable({"a": float("inf"), "b": [np.float64("nan"), np.int64(3)]}) == \
        {"a": "inf", "b": ["nan", 3]}
