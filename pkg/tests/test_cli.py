import csv
import io
import json

import pytest

from ratdil.cli import (EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, PipelineConfig,
                        ValidationError, dumps, main, to_jsonable)

ANNULUS = {"outer": [0, 1], "holes": [[0.3, 0.2]]}


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def annulus(tmp_path):
    path = tmp_path / "annulus.json"
    path.write_text(json.dumps(ANNULUS))
    return str(path)


# --- configuration ----------------------------------------------------------------

def test_config_defaults():
    cfg = PipelineConfig.load(None)
    assert cfg.seed == 7 and cfg.grid == 8
    assert all(v > 0 for v in cfg.tolerances.values())


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 1, "gird": 8}))
    with pytest.raises(ValidationError):
        PipelineConfig.load(path)


def test_config_rejects_nonpositive_tolerance():
    with pytest.raises(ValidationError):
        PipelineConfig(tolerances={"cone": 0.0})


def test_json_conversion():
    import numpy as np

    obj = {"z": 1 + 2j, "a": np.array([1.0, 2.0]), "b": np.bool_(True), "n": np.int64(3)}
    assert to_jsonable(obj) == {"z": [1.0, 2.0], "a": [1.0, 2.0], "b": True, "n": 3}
    assert dumps({"b": 1, "a": 2}).index('"a"') < dumps({"b": 1, "a": 2}).index('"b"')


# --- subcommands -----------------------------------------------------------------

def test_domain_command(capsys):
    code, out, _ = run(capsys, "domain", "--out", "json")
    assert code == EXIT_OK
    rep = json.loads(out)
    assert rep["n"] == 2


def test_domain_rejects_annulus(capsys, annulus):
    code, _, err = run(capsys, "domain", "--domain", annulus)
    assert code == EXIT_VALIDATION
    assert "n = 1" in err


def test_bad_base_point_is_validation_error(capsys):
    code, _, err = run(capsys, "testfn", "build", "--p", "1,2", "--b", "0.5", "--out", "json")
    assert code == EXIT_VALIDATION and "not in the domain" in err


def test_numerical_failure_exit_code(capsys):
    # p on the real axis for both holes degenerates the test function
    code, _, err = run(capsys, "testfn", "build", "--p", "3.14159265,0", "--out", "json")
    assert code == EXIT_NUMERICAL
    assert "ZeroCountError" in err


def test_harmonic_csv(capsys):
    code, out, _ = run(capsys, "harmonic", "solve", "--curve", "1", "--grid", "16", "--out", "csv")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 3 * 16
    # the harmonic characteristic function of curve 1 is 1 there and 0 elsewhere
    for r in rows:
        assert abs(float(r["value"]) - (1.0 if r["curve"] == "1" else 0.0)) < 1e-8


def test_testfn_select(capsys):
    code, out, _ = run(capsys, "testfn", "select", "--out", "json")
    assert code == EXIT_OK
    rep = json.loads(out)
    assert rep["offaxis_margin"] > 0


def test_jacobian_theta(capsys):
    code, out, _ = run(capsys, "jacobian", "theta", "--out", "json")
    assert code == EXIT_OK
    rep = json.loads(out)
    assert rep["quasi_periodicity_error"] < 1e-8
    assert rep["theta_star_at_0"] < 1e-8


def test_fay_check(capsys):
    code, out, _ = run(capsys, "fay", "check", "--backend", "theta", "--out", "json")
    assert code == EXIT_OK
    rep = json.loads(out)
    assert rep["gram_vs_theta"] < 1e-4
    assert rep["kernel_at_b_error"] < 1e-6


def test_matinner_diag(capsys):
    code, out, _ = run(capsys, "matinner", "diag", "--t", "0.05", "--out", "json")
    assert code == EXIT_OK
    rep = json.loads(out)
    assert not rep["success"] and rep["witness"] >= 1e-4


def test_matinner_pick(capsys):
    code, out, _ = run(capsys, "matinner", "pick", "--tol", "1e-8", "--out", "json")
    assert code == EXIT_OK
    assert json.loads(out)["rank"] == 6


def test_cone_rho_scalar(capsys):
    code, out, _ = run(capsys, "cone", "rho", "--f", "psi_p", "--out", "json")
    assert code == EXIT_OK
    rep = json.loads(out)
    assert rep["rho_lower"] >= 0.995
    assert {"rho_lower", "rho_upper", "residual_trace", "seed", "grid"} <= set(rep)


# --- pipeline --------------------------------------------------------------------

def test_pipeline_partial_stage(capsys):
    code, out, _ = run(capsys, "pipeline", "--stage", "harmonic", "--out", "json")
    assert code == EXIT_OK
    rep = json.loads(out)
    assert rep["completed"] == ["domain", "harmonic"]
    assert rep["seed"] == 7


def test_pipeline_rejects_annulus(capsys, annulus):
    code, _, err = run(capsys, "pipeline", "--domain", annulus, "--out", "json")
    assert code == EXIT_VALIDATION
    assert "domain" in err


def test_pipeline_rejects_bad_config(capsys, tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"tolerances": {"cone": -1}}))
    code, _, _ = run(capsys, "pipeline", "--config", str(path), "--out", "json")
    assert code == EXIT_VALIDATION


def test_pipeline_reproducible(capsys, tmp_path, monkeypatch, pipeline_run):
    assert pipeline_run["code"] == EXIT_OK
    first = pipeline_run["dir"]
    monkeypatch.chdir(tmp_path)
    code, _, _ = run(capsys, "pipeline", "--out", "ratdil_out")
    assert code == EXIT_OK
    second = tmp_path / "ratdil_out"
    for name in ("report.json", "bisection.csv", "t_scan.csv", "domain.svg",
                 "psi_modulus.svg", "bisection.svg"):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name
    assert (second / "timings.json").exists()


def test_pipeline_verdicts(pipeline_run):
    rep = json.loads((pipeline_run["dir"] / "report.json").read_text())
    assert rep["verdicts"] == {"szs": "pass", "eps": "pass", "diag": "witness",
                               "rho_upper_lt_1": True}
    assert rep["seed"] == 7
