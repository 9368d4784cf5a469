"""Monitor construction on the fixture specifications."""

import itertools
import json

import pytest

from rpmon import rpltl as lt
from rpmon.game import OPEN, SAFETY, UNSAT
from rpmon.monitor import (
    BuildConfig, MonitorError, StateCapExceeded, build, check_monotone, export, from_json, to_json,
)
from rpmon.oracles import (
    LassoBox, check_monitor_for_formula, check_state_correctness, sample_lassos, spec_constants,
    steered_lassos,
)
from rpmon.rules import RuleConfig

from conftest import FIXTURES, load_spec

NAMES = sorted(p.stem for p in FIXTURES.glob("*.rpltl"))


@pytest.fixture(scope="module")
def built(smt):
    cache = {}

    def get(name):
        if name not in cache:
            spec = load_spec(name)
            cache[name] = (spec, build(spec, BuildConfig(), smt))
        return cache[name]
    return get


def lasso_pool(spec, m, n=300):
    variables = list(spec.inputs) + list(spec.program_vars)
    box = LassoBox(extra_values=tuple(sorted(spec_constants([spec.formula()]))))
    return sample_lassos(variables, box, n, seed=3) + steered_lassos(m, variables, box, n, seed=4)


@pytest.mark.parametrize("name", NAMES)
def test_state_correctness(built, name):
    spec, m = built(name)
    res = check_state_correctness(m, spec.formula(), lasso_pool(spec, m))
    assert res.ok, res.line()


@pytest.mark.parametrize("name", NAMES)
def test_verdicts_respect_the_language(built, name):
    spec, m = built(name)
    res = check_monitor_for_formula(m, spec.formula(), lasso_pool(spec, m))
    assert res.ok, res.line()


@pytest.mark.parametrize("name", NAMES)
def test_transitions_are_total_and_deterministic(built, name):
    spec, m = built(name)
    names = sorted(set(spec.inputs) | set(spec.program_vars) | {v + "'" for v in spec.program_vars})
    envs = [dict(zip(names, t)) for t in itertools.product(range(-2, 3), repeat=len(names))]
    for i, out in m.transitions.items():
        for env in envs:
            assert sum(a.holds(m.table, env) for a, _ in out) == 1, (i, env)


@pytest.mark.parametrize("name", NAMES)
def test_verdicts_are_monotone(built, name):
    _, m = built(name)
    check_monotone(m)
    for i, out in m.transitions.items():
        if m.verdicts[i] == UNSAT:
            assert all(m.verdicts[j] == UNSAT for _, j in out)


@pytest.mark.parametrize("name", NAMES)
def test_json_round_trip(built, name):
    _, m = built(name)
    text = export(m, "json")
    again = from_json(text)
    assert export(again, "json") == text
    assert again.verdicts == m.verdicts


@pytest.mark.parametrize("name", NAMES)
def test_dot_export(built, name):
    _, m = built(name)
    dot = export(m, "dot")
    assert dot.startswith("digraph monitor {")
    assert dot.count(" -> q") == 1 + sum(len(v) for v in m.transitions.values())


def test_unknown_format(built):
    _, m = built("trivial")
    with pytest.raises(ValueError):
        export(m, "xml")


def test_deterministic_output(smt):
    spec = load_spec("response")
    a = export(build(spec, smt=smt), "json")
    b = export(build(spec, smt=smt), "json")
    assert a == b


def test_unsat_spec_is_bound_to_fail(built):
    _, m = built("unsat")
    assert all(m.verdicts[j] == UNSAT or m.states[j].assumption_false
               for j in m.successors(m.init)) or m.verdicts[m.init] == UNSAT


def test_vacuous_spec_is_all_safety(built):
    _, m = built("vacuous")
    reach = m.reachable(m.init)
    assert {m.verdicts[i] for i in reach} <= {SAFETY, UNSAT}
    assert m.verdicts[m.init] == SAFETY


def test_recurrence_is_discharged(built):
    _, m = built("recurrence")
    assert m.stats["gf_discharged"] >= 1
    assert OPEN not in {m.verdicts[i] for i in m.reachable(m.init)}


def test_trivial_spec(built):
    _, m = built("trivial")
    assert len(m.states) == 1 and m.verdicts[m.init] == SAFETY


def test_liveness_stays_open_without_rules(smt):
    spec = load_spec("vacuous")
    m = build(spec, BuildConfig(apply_rules=False, discharge_gf=False, max_states=400), smt)
    assert m.verdicts[m.init] == OPEN
    res = check_state_correctness(m, spec.formula(), lasso_pool(spec, m, 150))
    assert res.ok, res.line()


@pytest.mark.parametrize("name", ["stay", "unsat", "response", "inputs_only"])
def test_reachable_set_invariants_keep_state_correctness(smt, name):
    spec = load_spec(name)
    m = build(spec, BuildConfig(rules=RuleConfig(gen_inv_p=True)), smt)
    res = check_state_correctness(m, spec.formula(), lasso_pool(spec, m, 150))
    assert res.ok, res.line()


def test_state_cap(smt):
    spec = lt.parse("var x : int; guarantee X X X X X x > 0;")
    with pytest.raises(StateCapExceeded):
        build(spec, BuildConfig(max_states=3), smt)
    assert len(build(spec, BuildConfig(max_states=10), smt).states) > 3


def test_json_shape(built):
    _, m = built("stay")
    d = json.loads(export(m, "json"))
    assert set(d) >= {"inputs", "program_vars", "predicates", "states", "init", "transitions", "stats"}
    s0 = d["states"][d["init"]]
    assert set(s0) >= {"F_A", "E_A", "F_G", "E_G", "Imp_A", "Imp_G", "verdict"}


def test_from_json_rejects_duplicate_predicates(built):
    _, m = built("stay")
    d = to_json(m)
    d["predicates"] = d["predicates"] + d["predicates"][:1]
    d["predicate_kinds"] = d["predicate_kinds"] + d["predicate_kinds"][:1]
    with pytest.raises(MonitorError):
        from_json(d)
