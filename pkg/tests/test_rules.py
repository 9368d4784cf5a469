"""Rewrite rules: worked traces, single rules and a randomised soundness audit."""

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from rpmon import rpltl as lt
from rpmon.expansion import PredicateTable, next_state_raw, relevant_letters
from rpmon.fixpoint import FixpointBudget
from rpmon.oracles import SoundnessAuditor, LassoBox
from rpmon.rules import (
    Resources, RuleConfig, RuleId, apply_rules, apply_rules_traced, partition_initial, try_rule,
)
from rpmon.state import ImpFormula, make_state, now

from conftest import FIXTURES, load_spec
from strategies import ltl_formulas

IN, PV = ["e", "i"], ["x", "y"]


def P(s):
    return lt.nnf(lt.parse_formula(s, inputs=IN, program_vars=PV))


def Q(s):
    return lt.parse_qf(s, inputs=IN, program_vars=PV)


def resources(q, smt, **cfg):
    table = PredicateTable.from_formulas(list(q.fa + q.ea + q.fg + q.eg), IN)
    return Resources(table, smt, RuleConfig(**cfg))


def visible(trace):
    return [r for r in trace if r not in ("PropagateG", "PropagateAssump")]


# -- worked traces ---------------------------------------------------------------


def test_invariant_then_unsat(smt):
    # y = 0 -> F x = -5 under x = 0, x = y and a non-decreasing x
    q = make_state(fg=(P("y = 0 -> F x = -5"),), eg=(P("x = 0"), P("G x = y"), P("G x' >= x")))
    out, trace = apply_rules_traced(q, resources(q, smt))
    assert visible(trace) == ["GenInv", "ChainImpG", "SubstFalse", "Unsat"]
    assert out.guarantee_false
    assert out.text() == (
        "<{}, {}, {false}, {false}, {}, {G(x = 0 -> G (x != -5)), G(true -> x' >= x), "
        "G(true -> x = y), G(true -> x != -5)}>")


def test_invariant_under_assumption_then_liveness_conflict(smt):
    q = make_state(fg=(P("X y = 1"), P("X G y = x'")), eg=(P("x = 1"),),
                   imp_g=(now(Q("x' > x")), ImpFormula(Q("y = 1"), "F", Q("y < 0"))))
    res = resources(q, smt, gen_inv_p=True)
    out, trace = apply_rules_traced(q, res)
    assert visible(trace) == ["GenInvP", "ChainImpG"]
    assert out.text() == (
        "<{}, {}, {X (y = 1), X G (x' = y)}, {x = 1}, {}, {G(y = 1 -> F (y <= -1)), "
        "G(x = 1 -> G (x > 0)), G(true -> x' >= x + 1), G(true -> x > 0)}>")
    letters = relevant_letters(out.fa + out.ea + out.fg + out.eg, res.table, smt)
    assert len(letters) == 2
    (a,) = [a for a in letters if a.holds(res.table, {"x": 1})]
    nxt, trace2 = apply_rules_traced(next_state_raw(out, a, res.table, smt), res)
    assert trace2 == ["PropagateG", "UnsatF"]
    assert nxt.guarantee_false


def test_reachability_discharges_eventuality(smt):
    q = make_state(fg=(P("F x > 1000"),), eg=(P("x = 0"), P("G x' > x")), imp_g=(now(Q("x' > x")),))
    out, trace = apply_rules_traced(q, resources(q, smt))
    assert visible(trace) == ["GenReach", "SimplifyNonNested"]
    assert out.fg == ()
    assert out.text() == (
        "<{}, {}, {}, {x = 0, G (x' >= x + 1)}, {}, "
        "{G(x = 0 -> F (x > 1000)), G(true -> x' >= x + 1)}>")


def test_disabling_gen_inv_blocks_the_conflict(smt):
    q = make_state(fg=(P("y = 0 -> F x = -5"),), eg=(P("x = 0"), P("G x = y"), P("G x' >= x")))
    out = apply_rules(q, resources(q, smt, disabled=frozenset({RuleId.GEN_INV})))
    assert not out.guarantee_false


# -- single rules ----------------------------------------------------------------


def test_unsat(smt):
    q = make_state(eg=(P("x = 0"),), imp_g=(now(Q("x != 0")),))
    assert try_rule(RuleId.UNSAT, q, resources(q, smt)).guarantee_false


def test_unsat_f(smt):
    q = make_state(eg=(P("x = 0"),), imp_g=(ImpFormula(Q("x = 0"), "F", Q("y = 0")), now(Q("y != 0"))))
    assert try_rule(RuleId.UNSAT_F, q, resources(q, smt)).guarantee_false
    assert try_rule(RuleId.UNSAT, q, resources(q, smt)) is None


def test_unsat_needs_a_real_conflict(smt):
    q = make_state(eg=(P("x = 0"),), imp_g=(now(Q("y != 0")),))
    assert try_rule(RuleId.UNSAT, q, resources(q, smt)) is None


def test_propagate_g_records_invariants(smt):
    q = make_state(eg=(P("G x' = y"),))
    out = try_rule(RuleId.PROPAGATE_G, q, resources(q, smt))
    assert now(Q("x' = y")) in out.imp_g


def test_subst_false_drops_impossible_disjunct(smt):
    q = make_state(fg=(P("x < 0 || F y = 0"),), eg=(P("G x > 0"),), imp_g=(now(Q("x > 0")),))
    out = try_rule(RuleId.SUBST_FALSE, q, resources(q, smt))
    assert out is not None
    assert out.fg == (P("F y = 0"),)


def test_subst_true_needs_entailment(smt):
    q = make_state(fg=(P("F (x > 0 && y = 0)"),), imp_g=(now(Q("x > 5")),))
    out = try_rule(RuleId.SUBST_TRUE, q, resources(q, smt))
    assert out is not None and out.fg == (P("F y = 0"),)
    q2 = make_state(fg=(P("F (x > 0 && y = 0)"),), imp_g=(now(Q("x > -5")),))
    assert try_rule(RuleId.SUBST_TRUE, q2, resources(q2, smt)) is None


def test_assumption_side_rules(smt):
    q = make_state(fa=(P("F e > 0"),), ea=(P("G e <= 0"),), fg=(P("F x > 0"),))
    out = apply_rules(q, resources(q, smt))
    assert out.assumption_false


# -- soundness -------------------------------------------------------------------


FAST = FixpointBudget(max_iterations=4, timeout_ms=1000, ranking=False)


@pytest.mark.parametrize("path", sorted(FIXTURES.glob("*.rpltl")), ids=lambda p: p.stem)
def test_fixture_initial_rules_are_sound(smt, path):
    spec = load_spec(path.stem)
    q = partition_initial(spec)
    table = PredicateTable.from_formulas([spec.formula()], spec.inputs)
    auditor = SoundnessAuditor(list(spec.inputs) + list(spec.program_vars), LassoBox(), samples=120)
    apply_rules(q, Resources(table, smt, RuleConfig(gen_inv_p=True), auditor=auditor))
    assert auditor.ok, auditor.result().failures[:1]


LITS = ["x = 0", "x > 0", "x < 2", "y = 1", "y > x", "e > 0", "x = y"]
STEPS = ["x' = x", "x' >= x", "x' = x + 1", "x' = y", "y' = y", "y' = e"]


@st.composite
def rule_states(draw):
    """States shaped like those the builder meets: facts, G-updates, implied formulas and goals."""
    lit = st.sampled_from(LITS)
    eg = draw(st.lists(st.one_of(lit, st.sampled_from(STEPS).map(lambda u: f"G ({u})")), max_size=3))
    goal = st.one_of(
        lit.map(lambda a: f"F {a}"),
        st.tuples(lit, lit).map(lambda p: f"{p[0]} -> F {p[1]}"),
        st.tuples(lit, lit).map(lambda p: f"{p[0]} U {p[1]}"),
        lit.map(lambda a: f"X G {a}"),
        st.tuples(lit, lit).map(lambda p: f"{p[0]} || X {p[1]}"),
    )
    fg = draw(st.lists(goal, min_size=1, max_size=2))
    imp = st.builds(lambda g, k, a: ImpFormula(Q(g), k, Q(a)),
                    st.sampled_from(LITS + ["true"]), st.sampled_from(["now", "X", "F", "G"]),
                    st.sampled_from(LITS + STEPS))
    fa = draw(st.lists(lit.map(lambda a: f"G F {a}"), max_size=1))
    return make_state(fa=tuple(map(P, fa)), fg=tuple(map(P, fg)), eg=tuple(map(P, eg)),
                      imp_g=tuple(draw(st.lists(imp, max_size=2))))


@settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(rule_states())
def test_builder_shaped_states_rewrite_soundly(smt, q):
    table = PredicateTable.from_formulas(list(q.fa + q.fg + q.eg), IN)
    auditor = SoundnessAuditor(["x", "y", "e"], LassoBox(), samples=80, seed=2)
    apply_rules(q, Resources(table, smt, RuleConfig(gen_inv_p=True, budget=FAST), auditor=auditor))
    assert auditor.ok, auditor.result().failures[:1]


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.lists(ltl_formulas(max_leaves=4), min_size=1, max_size=2),
       st.lists(ltl_formulas(max_leaves=3), max_size=2))
def test_random_states_rewrite_soundly(smt, fs, es):
    q = make_state(fg=tuple(lt.nnf(f) for f in fs), eg=tuple(lt.nnf(e) for e in es))
    table = PredicateTable.from_formulas(list(q.fg + q.eg), ("e",))
    auditor = SoundnessAuditor(["x", "y", "e"], LassoBox(), samples=80, seed=1)
    apply_rules(q, Resources(table, smt, RuleConfig(gen_inv_p=True, budget=FAST), auditor=auditor))
    assert auditor.ok, auditor.result().failures[:1]
