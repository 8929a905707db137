import json
import subprocess
import sys

import pytest

from conic_market import __version__
from conic_market.cli import run
from conic_market.fixtures import instance_path


def call(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = run([*argv, "--output", str(out)])
    return code, (out.read_text() if out.exists() else None)


def test_check_na_payload(tmp_path):
    code, text = call(tmp_path, "check-na", "--instance", str(instance_path("arb_cycle")))
    assert code == 0
    body = json.loads(text)
    assert body["version"] == __version__
    assert body["config"]["command"] == "check-na"
    assert body["config"]["feas_tol"] == 1e-9
    assert body["result"]["verdict"] == "Arbitrage"


def test_check_nar_verdicts(tmp_path):
    code, text = call(tmp_path, "check-nar", "--instance", str(instance_path("na_not_nar")), "--eps", "0.5,0.1")
    assert code == 0
    body = json.loads(text)
    assert body["result"]["verdict"] == "NotRobust"
    assert body["config"]["epsilons"] == [0.5, 0.1]


def test_superhedge_command(tmp_path):
    code, text = call(tmp_path, "superhedge", "--instance", str(instance_path("binomial_frictionless")))
    assert code == 0
    assert json.loads(text)["result"]["primal_price"] == pytest.approx(1 / 3, abs=1e-6)


def test_umax_command(tmp_path):
    code, text = call(tmp_path, "umax", "--instance", str(instance_path("det_log")))
    assert code == 0
    res = json.loads(text)["result"]
    assert res["status"] == "Optimal"
    assert res["verified"]["feasible"]
    assert set(res) >= {"value", "consumption", "plan", "status"}


def test_dual_gap_csv(tmp_path):
    code, text = call(tmp_path, "dual-gap", "--instance", str(instance_path("det_log")), "--y", "0.5,1,2")
    assert code == 0
    lines = text.splitlines()
    assert lines[0] == f"# conic_market {__version__}"
    assert lines[1].startswith("# config ")
    assert lines[2] == "y,w_y,dual_y,gap"
    rows = [list(map(float, line.split(","))) for line in lines[3:]]
    assert len(rows) == 3
    assert all(abs(r[3]) <= 1e-3 for r in rows)


def test_validate_reports_return_axioms(tmp_path):
    code, text = call(tmp_path, "validate", "--instance", str(instance_path("strict_cost_cobb_douglas")))
    assert code == 0
    assert json.loads(text)["result"]["return_axioms"]["passed"]


@pytest.mark.parametrize("argv, code", [
    (["bogus"], 1),
    (["check-na"], 1),
    (["check-na", "--instance", "x.json", "--tol", "-1"], 1),
    (["dual-gap", "--instance", "x.json", "--y", "2,1"], 1),
    (["gen", "binomial", "--T", "0"], 1),
    (["check-na", "--instance", "/nonexistent/instance.json"], 2),
])
def test_exit_codes(argv, code):
    assert run(argv) == code


def test_invalid_instance_exit_code():
    assert run(["validate", "--instance", str(instance_path("bad_probs"))]) == 2


def test_missing_claim_is_usage_error():
    assert run(["superhedge", "--instance", str(instance_path("arb_cycle"))]) == 1


def test_gen_binomial(tmp_path):
    code, text = call(tmp_path, "gen", "binomial", "--T", "2")
    assert code == 0
    assert len(json.loads(text)["nodes"]) == 7


def test_gen_then_check(tmp_path):
    code, _ = call(tmp_path, "gen", "random_tree", "--T", "2", "--seed", "7", name="inst.json")
    assert code == 0
    code, text = call(tmp_path, "check-na", "--instance", str(tmp_path / "inst.json"))
    assert code == 0
    assert json.loads(text)["result"]["verdict"] in ("Arbitrage", "NoArbitrage")


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "conic_market.cli", "gen", "chain", "--T", "1"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["T"] == 1
