import json
import subprocess
import sys

import pytest

from grushin_hardy.cli import run

DAMBROSIO = ["verify", "--catalog", "dambrosio", "--params", "alpha=4,beta=2", "--space", "1,1,1",
             "--p", "2", "--f", "bump((rho-1.5)/0.5)"]


def run_cli(*argv):
    proc = subprocess.run([sys.executable, "-m", "grushin_hardy", *argv], capture_output=True, text=True)
    return proc.returncode, proc.stdout, proc.stderr


def test_pass_exit_zero():
    code, out, _ = run_cli(*DAMBROSIO)
    assert code == 0
    rep = json.loads(out)
    assert rep["pass"] is True and rep["residual_rel"] <= 1e-3


def test_absurd_tolerance_exit_one():
    code, out, _ = run_cli(*DAMBROSIO, "--tol", "1e-12")
    assert code == 1
    assert json.loads(out)["pass"] is False


def test_usage_error_exit_two():
    code, _, err = run_cli("verify", "--catalog", "nosuch")
    assert code == 2
    assert "unknown catalog key" in err


def test_determinism():
    a = run_cli(*DAMBROSIO)[1]
    b = run_cli(*DAMBROSIO)[1]
    assert a == b


def test_parse_error_shows_caret(capsys):
    code = run(["verify", "--catalog", "dambrosio", "--space", "1,1,1", "--p", "2", "--f", "exp("])
    err = capsys.readouterr().err
    assert code == 2
    assert "offset 4" in err and "^" in err


@pytest.mark.parametrize("argv", [
    ["verify", "--catalog", "dambrosio", "--space", "1,1", "--p", "2", "--f", "rho"],
    ["verify", "--catalog", "dambrosio", "--params", "alpha", "--space", "1,1,1", "--p", "2", "--f", "rho"],
    ["verify", "--catalog", "log-rho", "--params", "alpha=-0.5", "--space", "1,1,1", "--p", "2", "--f", "rho"],
    ["constants"],
    ["bessel", "--catalog", "super", "--space", "1,1,1", "--p", "2", "--grid", "5:1:10"],
])
def test_usage_errors(argv, capsys):
    assert run(argv) == 2


def test_constants_p2(capsys):
    assert run(["constants", "--p", "2"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert abs(d["c1"] - 1.0) <= 1e-6
    assert list(d)[:4] == ["p", "c1", "c2_inf", "c3_sup"]


def test_derive_weight(capsys):
    code = run(["derive-weight", "--space", "1,1,1", "--p", "2", "--v", "1", "--phi", "rho^(-0.5)", "--at", "1;0"])
    assert code == 0
    d = json.loads(capsys.readouterr().out)
    assert abs(d["w"] - 0.25) <= 1e-7


def test_bessel(capsys):
    assert run(["bessel", "--catalog", "super", "--space", "1,1,1", "--p", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["residual"] <= 1e-6


def test_campaign_outputs(tmp_path, capsys):
    cfg = {
        "defaults": {"space": [1, 1, 1.0], "p": 2},
        "runs": [
            {"name": "a", "catalog": "dambrosio", "params": {"alpha": 4, "beta": 2}, "f": "bump((rho-1.5)/0.5)"},
            {"name": "b", "catalog": "super", "f": "bump((rho-1.5)/0.5)*exp(i*y1)"},
        ],
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    csv_path, json_path = tmp_path / "out.csv", tmp_path / "out.json"
    code = run(["campaign", "--config", str(path), "--csv", str(csv_path), "--json", str(json_path)])
    assert code == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "run,key,p,lhs,weighted,extras_sum,remainder,residual_rel,pass"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["a", "b"]
    payload = json.loads(json_path.read_text())
    assert [r["run"] for r in payload] == ["a", "b"]
    assert json_path.read_text() == capsys.readouterr().out


def test_campaign_unknown_key(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"runs": [{"catalog": "nosuch", "space": [1, 1, 0], "p": 2, "f": "rho"}]}))
    assert run(["campaign", "--config", str(path)]) == 2
