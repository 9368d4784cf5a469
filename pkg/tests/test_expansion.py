"""One-step expansion, letters and propagation."""

import itertools

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from rpmon import formula as fm
from rpmon import rpltl as lt
from rpmon.expansion import (
    Letter, PredicateTable, expand, expand_partial, letter_for, next_state_raw,
    propagate, relevant_letters, state_letters,
)
from rpmon.formula import Lin
from rpmon.oracles import check_expansion, full_letter
from rpmon.state import initial_state

from conftest import FIXTURES, load_spec
from strategies import lassos, ltl_formulas


def table_for(f):
    return PredicateTable.from_formulas([f], inputs=("e",), default_prop_preds=False)


@settings(max_examples=1200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(ltl_formulas(max_leaves=8), lassos())
def test_expansion_lemma(f, rho):
    # rho |= f  iff  rho[1..] |= expand(f, letter of rho's first step)
    assert check_expansion(f, rho, table_for(f))


@settings(max_examples=400, deadline=None)
@given(ltl_formulas(), lassos(), st.data())
def test_partial_expansion_agrees_with_full(f, rho, data):
    g = lt.nnf(f)
    table = table_for(g)
    full = full_letter(table, rho)
    keep = data.draw(st.sets(st.sampled_from(range(len(table))) if len(table) else st.nothing()))
    partial = {i: v for i, v in full.values.items() if i in keep}
    e = expand_partial(g, partial, table)
    if e is not None:
        assert e == expand(g, full, table)
    assert expand_partial(g, full.values, table) == expand(g, full, table)


def test_expansion_examples():
    t = PredicateTable()
    p = lt.parse_formula("x > 0")
    t.add(p.qf)
    yes, no = letter_for(t, [0], {"x": 1}), letter_for(t, [0], {"x": 0})
    assert expand(lt.t_globally(p), yes, t) == lt.t_globally(p)
    assert expand(lt.t_globally(p), no, t) == lt.FF
    assert expand(lt.t_eventually(p), yes, t) == lt.TT
    assert expand(lt.t_eventually(p), no, t) == lt.t_eventually(p)
    assert expand(lt.t_next(p), no, t) == p


# -- letters ---------------------------------------------------------------------


STEP_NAMES = ("x", "y", "e", "x'", "y'")


def step_envs(radius=2):
    for vals in itertools.product(range(-radius, radius + 1), repeat=len(STEP_NAMES)):
        yield dict(zip(STEP_NAMES, vals))


def assert_partition(letters, table, envs):
    for env in envs:
        hits = [a for a in letters if a.holds(table, env)]
        assert len(hits) == 1, (env, [a.key() for a in hits])


@pytest.mark.parametrize("text", [
    "x > 0 && x' = x + 1",
    "x + y <= 2 || x' > y",
    "e > 0 -> x' = e",
])
def test_relevant_letters_partition(smt, text):
    f = lt.parse_formula(text)
    table = table_for(f)
    letters = relevant_letters([f], table, smt)
    for a in letters:
        assert smt.check_sat(a.formula(table)).is_sat
    assert_partition(letters, table, step_envs(1))


def test_relevant_letters_drop_inconsistent_combinations(smt):
    f = lt.parse_formula("x > 0 && x > 1")
    table = table_for(f)
    letters = relevant_letters([f], table, smt)
    assert len(letters) == 3  # x > 1 without x > 0 is impossible


@pytest.mark.parametrize("name", sorted(p.stem for p in FIXTURES.glob("*.rpltl")))
def test_state_letters_partition_fixture_states(smt, name):
    spec = load_spec(name)
    q = initial_state(spec.assumption(), spec.guarantee())
    table = PredicateTable.from_formulas(q.fa + q.ea + q.fg + q.eg, inputs=spec.inputs)
    letters = state_letters(q, table, smt)
    assert letters
    names = set(spec.inputs) | set(spec.program_vars)
    names |= {v + "'" for v in spec.program_vars}
    names = sorted(names)
    envs = [dict(zip(names, vals)) for vals in itertools.product(range(-2, 3), repeat=len(names))]
    assert_partition(letters, table, envs)
    # every letter decides the current step of the state
    for a in letters:
        next_state_raw(q, a, table, smt)


def test_letter_for_reads_the_valuation():
    t = PredicateTable()
    t.add(fm.compare(">", Lin.var("x"), 0))
    t.add(fm.compare("=", Lin.var("x'"), Lin.var("x")))
    a = letter_for(t, [0, 1], {"x": 3, "x'": 3})
    # ids index canonical atoms: x > 0 is stored as the negation of x <= 0
    assert a.values == {0: False, 1: True}
    assert a.holds(t, {"x": 3, "x'": 3})
    assert not a.holds(t, {"x": 0, "x'": 0})


# -- propagation ------------------------------------------------------------------


def test_propagation_of_monotone_update(smt):
    f = lt.parse_formula("G (x > 0 && x' >= x)")
    table = PredicateTable.from_formulas([f])
    letter = letter_for(table, range(len(table)), {"x": 2, "x'": 5})
    facts = propagate(letter, table, smt)
    assert lt.parse_formula("x > 0") in facts
    # a decreasing step gives no guarantee about the next value
    assert propagate(letter_for(table, range(len(table)), {"x": 2, "x'": 0}), table, smt) == []


def test_propagation_of_constant_update(smt):
    f = lt.parse_formula("G (x' = 3)")
    table = PredicateTable.from_formulas([f])
    facts = propagate(letter_for(table, range(len(table)), {"x": 0, "x'": 3}), table, smt)
    assert lt.parse_formula("x = 3") in facts


def test_no_propagation_without_primed_facts(smt):
    f = lt.parse_formula("G x > 0")
    table = PredicateTable.from_formulas([f])
    assert propagate(letter_for(table, range(len(table)), {"x": 1}), table, smt) == []


def test_false_assumption_makes_a_true_state(smt):
    spec = lt.parse("input e : int; var x : int; assume G e > 0; guarantee G x > 0;")
    q = initial_state(spec.assumption(), spec.guarantee())
    table = PredicateTable.from_formulas(q.fa + q.ea + q.fg + q.eg, inputs=spec.inputs)
    letter = letter_for(table, range(len(table)), {"e": 0, "x": 1})
    nxt = next_state_raw(q, letter, table, smt)
    assert nxt.assumption_false
