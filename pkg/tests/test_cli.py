import csv
import json
from pathlib import Path

import pytest
import yaml

from hermitian_ma.cli import (CONVERGENCE_COLUMNS, EXIT_CONFIG, EXIT_FAIL, EXIT_OK, LAMBDA_COLUMNS, RADIAL_COLUMNS,
                              RECORD_COLUMNS, canonical, main)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def test_canonical_rounding():
    assert canonical(0.1 + 0.2) == 0.3
    assert canonical(1e-12) == 0.0
    assert canonical({"a": [1.23456789, float("nan")]}) == {"a": [1.23457, "nan"]}
    assert canonical(canonical(2 / 3)) == canonical(2 / 3)


@pytest.mark.parametrize("cfg", [
    {"domain": {"kind": "ball", "n": 1, "h": 0.1}},
    {"domain": {"kind": "ball", "n": 1, "h": 0.1}, "solver": "maximal", "colour": "red"},
    {"domain": {"kind": "ball", "n": 3, "h": 0.1}, "solver": "maximal"},
    {"domain": {"kind": "ball", "n": 1, "h": -0.1}, "solver": "maximal"},
    {"domain": {"kind": "shell", "n": 1, "h": 0.1, "r_in": 1.0, "r_out": 0.5}, "solver": "maximal"},
    {"domain": {"kind": "ball", "n": 1, "h": 0.1}, "solver": "perron", "tolerances": {"tol_fix": -1}},
])
def test_malformed_config_exits_2_without_outputs(tmp_path, cfg):
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, cfg), "--out", str(out)]) == EXIT_CONFIG
    assert not out.exists()


def test_unreadable_config(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("domain: [unclosed")
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["run", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG


def test_suite_arguments(tmp_path):
    assert main(["suite", "energy", "--n", "1", "--out", str(tmp_path / "e")]) == EXIT_CONFIG
    assert not (tmp_path / "e").exists()
    assert main(["suite", "nonsense", "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert main(["--threads", "0", "suite", "holder"]) == EXIT_CONFIG
    assert main(["suite"]) == EXIT_CONFIG


def test_suite_output_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["suite", "holder", "--seed", "3", "--out", str(a)]) == EXIT_OK
    assert main(["--threads", "1", "suite", "holder", "--seed", "3", "--out", str(b)]) == EXIT_OK
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "records.csv").read_bytes() == (b / "records.csv").read_bytes()
    assert header(a / "records.csv") == RECORD_COLUMNS
    assert "seconds" in json.loads((a / "timings.json").read_text())


def test_maximal_demo(tmp_path):
    out = tmp_path / "m"
    assert main(["run", str(CONFIGS / "maximal_ball.yaml"), "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"]
    assert header(out / "convergence.csv") == CONVERGENCE_COLUMNS
    assert header(out / "radial.csv") == RADIAL_COLUMNS
    with open(out / "radial.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and all(abs(float(r["u"]) - float(r["exact"])) <= 3 * float(r["h"]) for r in rows)


def test_lambda_demo(tmp_path):
    out = tmp_path / "l"
    assert main(["run", str(CONFIGS / "lambda_study.yaml"), "--out", str(out)]) == EXIT_OK
    assert header(out / "lambda.csv") == LAMBDA_COLUMNS


def test_manufactured_demo(tmp_path):
    out = tmp_path / "mf"
    assert main(["run", str(CONFIGS / "manufactured_n2.yaml"), "--out", str(out)]) == EXIT_OK
    conv = json.loads((out / "report.json").read_text())["convergence"]
    assert conv[1]["ratio_sup"] >= 1.5


def test_perron_without_subsolution_reports_precondition(tmp_path):
    cfg = {"domain": {"kind": "shell", "n": 1, "r_in": 0.5, "r_out": 1.0, "h": 0.0625},
           "manufactured": {"u_star": "quartic"}, "solver": "perron", "subsolution": "none"}
    out = tmp_path / "p"
    assert main(["run", write(tmp_path, cfg), "--out", str(out)]) == EXIT_FAIL
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] is False
    assert rep["solves"][0]["precondition"] == "subsolution"
    assert any(k.startswith("subsolution_") and v is False for k, v in rep["verdicts"].items())


def test_environment_tolerance_override(tmp_path, monkeypatch):
    cfg = {"domain": {"kind": "ball", "n": 1, "h": 0.125}, "solver": "maximal", "boundary": {"kind": "zero"}}
    monkeypatch.setenv("HERMITIAN_MA_TOL_FIX", "1e-7")
    out = tmp_path / "t"
    main(["run", write(tmp_path, cfg), "--out", str(out)])
    rep = json.loads((out / "report.json").read_text())
    assert rep["solves"][0]["tolerances"]["tol_fix"] == 1e-7
    monkeypatch.setenv("HERMITIAN_MA_TOL_FIX", "abc")
    assert main(["run", write(tmp_path, cfg), "--out", str(tmp_path / "t2")]) == EXIT_CONFIG


def test_timings_are_kept_out_of_the_report(tmp_path):
    cfg = {"domain": {"kind": "ball", "n": 1, "h": 0.125}, "solver": "laplace", "boundary": {"kind": "quadratic"},
           "output": {"full_dump": True}}
    out = tmp_path / "r"
    main(["run", write(tmp_path, cfg), "--out", str(out)])
    assert "seconds" not in (out / "report.json").read_text()
    assert (out / "solution_h0.125.csv").exists()
