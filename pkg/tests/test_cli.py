"""Command-line behaviour: output, files, environment and exit codes."""

import json
import sys

import pytest
from click.testing import CliRunner

from rpmon.cli import main
from rpmon.game import parse_game

from conftest import FIXTURES


def spec(name):
    return str(FIXTURES / f"{name}.rpltl")


def hoa(name):
    return str(FIXTURES / f"{name}.hoa")


@pytest.fixture
def run():
    runner = CliRunner()

    def go(*args, env=None, code=0):
        res = runner.invoke(main, [str(a) for a in args], env=env, catch_exceptions=False)
        assert res.exit_code == code, res.output
        return res.output
    return go


def test_help_lists_commands(run):
    out = run("--help")
    for cmd in ("check", "monitor", "product", "verify"):
        assert cmd in out
    out = run("product", "--help")
    for flag in ("--hoa", "--translator", "--solver", "--max-states", "--fixpoint-iters",
                 "--enable-gen-inv-p", "--chc", "--debug-soundness", "--format", "RPMON_MAX_STATES"):
        assert flag in out
    assert "--inject-fault" not in out


def test_check(run):
    out = run("check", spec("vacuous"))
    assert out.startswith("OK, ")
    assert "inputs: e" in out and "vars: x y" in out


def test_check_parse_error(run, tmp_path):
    bad = tmp_path / "bad.rpltl"
    bad.write_text("var x : int;\nguarantee G z > 0;\n")
    out = run("check", bad, code=2)
    assert "undeclared variable 'z'" in out and "2:" in out


def test_missing_file(run, tmp_path):
    run("check", tmp_path / "nope.rpltl", code=2)


def test_monitor_summary(run):
    out = run("monitor", spec("unsat"))
    assert "initial obligations UNSAT-bound: yes" in out
    out = run("monitor", spec("recurrence"))
    assert "GF discharged: 1 obligation\n" in out
    assert "all states SAFETY (besides the UNSAT sink)" in out


def test_monitor_json_file(run, tmp_path):
    path = tmp_path / "m.json"
    run("monitor", spec("stay"), "-o", path)
    data = json.loads(path.read_text())
    assert data["program_vars"] == ["x"]
    assert data["states"][data["init"]]["verdict"] in ("SAFETY", "OPEN", "UNSAT")


def test_monitor_dot_stdout(run):
    out = run("monitor", spec("stay"), "--format", "dot", "-o", "-")
    assert "digraph monitor {" in out


def test_state_cap_is_a_usage_error(run):
    out = run("monitor", spec("recurrence"), "--max-states", 2, code=2)
    assert "--max-states" in out


def test_options_from_environment(run):
    run("monitor", spec("recurrence"), env={"RPMON_MAX_STATES": "2"}, code=2)


def test_missing_solver_is_a_tool_failure(run):
    out = run("monitor", spec("stay"), "--solver", "/nonexistent/solver", code=3)
    assert "solver" in out


def test_product(run):
    out = run("product", spec("recurrence"), "--hoa", hoa("recurrence"))
    assert "winning condition: safety on all reachable locations" in out
    out = run("product", spec("unsat"), "--hoa", hoa("unsat"))
    assert "UNSAT sink reachable: yes" in out


def test_product_game_output_parses(run, tmp_path):
    path = tmp_path / "p.game"
    run("product", spec("response"), "--hoa", hoa("response"), "-o", path)
    g = parse_game(path.read_text())
    assert g.is_product


@pytest.mark.parametrize("fmt,needle", [("json", '"locations"'), ("dot", "digraph")])
def test_product_formats(run, fmt, needle):
    out = run("product", spec("stay"), "--hoa", hoa("stay"), "--format", fmt, "-o", "-")
    assert needle in out


def test_product_needs_an_automaton(run):
    out = run("product", spec("stay"), code=2)
    assert "--hoa" in out


def test_bad_automaton(run, tmp_path):
    bad = tmp_path / "bad.hoa"
    bad.write_text('HOA: v1\nStates: 1\nStart: 0\nAP: 1 "a"\nAcceptance: 2 Inf(0) & Inf(1)\n'
                   "--BODY--\nState: 0 {0}\n[t] 0\n--END--\n")
    run("product", spec("stay"), "--hoa", bad, code=2)


def test_translator_hook(run, tmp_path):
    fake = tmp_path / "fake_ltl2dpa.py"
    fake.write_text(f"import sys\nassert len(sys.argv) == 2\nprint(open({hoa('stay')!r}).read())\n")
    out = run("product", spec("stay"), "--translator", f"{sys.executable} {fake}")
    assert "winning condition" in out


@pytest.mark.parametrize("cmd", ["/nonexistent/ltl2dpa", "false"])
def test_translator_failure(run, cmd):
    out = run("product", spec("stay"), "--translator", cmd, code=3)
    assert "translator" in out


def test_verify_passes(run):
    out = run("verify", spec("stay"), "--hoa", hoa("stay"), "--samples", 150)
    assert "all oracles passed" in out
    assert "PASS pseudo-language game = product" in out


def test_verify_with_audit(run):
    out = run("verify", spec("unsat"), "--debug-soundness", "--samples", 100)
    assert "PASS rule soundness audit" in out


# each fault needs a fixture where the broken rule has something to act on
@pytest.mark.parametrize("fault,name", [("subst-unchecked", "response"), ("unsat-unchecked", "stay")])
def test_injected_faults_are_caught(run, fault, name):
    out = run("verify", spec(name), "--inject-fault", fault, "--samples", 150, code=1)
    assert "FAIL" in out and "counterexample" in out


def test_monitor_audit_flag(run):
    out = run("monitor", spec("vacuous"), "--debug-soundness")
    assert "PASS rule soundness audit" in out
