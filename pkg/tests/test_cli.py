import json
import subprocess
import sys

import pytest

from resagc.cli import main
from resagc.harness.examples import build_example
from resagc.modelio import model_to_dict


@pytest.fixture
def ex2_model(tmp_path):
    p = tmp_path / "ex2.json"
    p.write_text(json.dumps(model_to_dict(build_example("ex2").model)))
    return p


def _stderr_json(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


def test_synth_then_verify(tmp_path, ex2_model, capsys):
    out = tmp_path / "run"
    assert main(["synth", "--model", str(ex2_model), "--out", str(out), "--samples", "20"]) == 0
    assert json.loads(capsys.readouterr().out)["status"] == "ok"
    rc = main(["verify", "--model", str(ex2_model), "--contracts", str(out / "contracts.json"), "--samples", "200"])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["ok"] is True


def test_verify_fails_on_inflated_contract(tmp_path, ex2_model, capsys):
    out = tmp_path / "run"
    main(["synth", "--model", str(ex2_model), "--out", str(out)])
    capsys.readouterr()
    data = json.loads((out / "contracts.json").read_text())
    for c in data["contracts"]:
        c["epsilon"] = c["epsilon"] * 1.5
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    assert main(["verify", "--model", str(ex2_model), "--contracts", str(bad), "--samples", "500"]) == 1


def test_resilience_subcommand(ex2_model, capsys):
    assert main(["resilience", "--model", str(ex2_model), "--subsystem", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["kind"] == "exact" and out["epsilon"] == pytest.approx(3.1251, abs=1e-4)
    assert main(["resilience", "--model", str(ex2_model), "--subsystem", "7"]) == 2
    assert _stderr_json(capsys)["error"] == "usage"


def test_case_study_subcommand(tmp_path, capsys):
    assert main(["case-study", "ex1", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "report.json").exists()


def test_properties_subcommand(tmp_path, capsys):
    assert main(["properties", "--instances", "4", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "properties.json").read_text())["ok"]


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["bogus"],
        ["synth", "--model", "m.json"],
        ["case-study", "ex7", "--out", "x"],
        ["properties", "--instances", "0"],
        ["properties", "--seed", "-3"],
    ],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == 2
    err = _stderr_json(capsys)
    assert err["error"] == "usage" and err["message"]


def test_model_errors_are_reported_as_json(tmp_path, capsys):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"subsystems": [{"id": 0, "dim": 1, "kind": "linear", "A": [[1, 2]]}], "specs": []}))
    assert main(["resilience", "--model", str(p), "--subsystem", "0"]) == 2
    err = _stderr_json(capsys)
    assert err["error"] == "model" and any("subsystems[0].A" in d for d in err["details"])
    assert main(["resilience", "--model", str(tmp_path / "nope.json"), "--subsystem", "0"]) == 2
    assert "cannot read" in _stderr_json(capsys)["details"][0]


def test_thread_variable_is_validated(monkeypatch, capsys):
    monkeypatch.setenv("AGC_THREADS", "zero")
    assert main(["properties", "--instances", "1"]) == 2
    assert "AGC_THREADS" in _stderr_json(capsys)["message"]


def test_console_entry_point_runs_as_module(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "resagc", "case-study", "ex2", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "resagc", "nope"], capture_output=True, text=True)
    assert proc.returncode == 2 and json.loads(proc.stderr)["error"] == "usage"
