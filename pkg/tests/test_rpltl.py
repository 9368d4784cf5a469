"""Temporal formulas: parsing, normal forms and the lasso semantics."""

import functools

import pytest
from hypothesis import HealthCheck, given, settings

from rpmon import formula as fm
from rpmon import rpltl as lt
from rpmon.rpltl import Lasso, LassoError, ParseError

from conftest import FIXTURES
from strategies import lassos, ltl_formulas

PROP = settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def naive_eval(f, rho: Lasso, i: int = 0) -> bool:
    """Direct recursive reading of the semantics on the unrolled word.

    Every suffix of a lasso reappears within ``len(rho)`` steps, so each
    unbounded search can stop after that many positions.
    """
    n = len(rho)

    def norm(k):
        return k if k < n else len(rho.stem) + (k - len(rho.stem)) % len(rho.loop)

    @functools.lru_cache(maxsize=None)
    def ev(g, k):
        k = norm(k)
        if isinstance(g, lt.Const):
            return g.value
        if isinstance(g, lt.Lit):
            env = dict(rho[k])
            env.update({v + "'": x for v, x in rho[k + 1].items()})
            return fm.evaluate(g.qf, env)
        if isinstance(g, lt.Neg):
            return not ev(g.arg, k)
        if isinstance(g, lt.Conj):
            return all(ev(a, k) for a in g.args)
        if isinstance(g, lt.Disj):
            return any(ev(a, k) for a in g.args)
        if isinstance(g, lt.Imp):
            return not ev(g.left, k) or ev(g.right, k)
        if isinstance(g, lt.Next):
            return ev(g.arg, k + 1)
        window = range(k, k + n + 1)
        if isinstance(g, lt.Globally):
            return all(ev(g.arg, j) for j in window)
        if isinstance(g, lt.Eventually):
            return any(ev(g.arg, j) for j in window)
        if isinstance(g, (lt.Until, lt.WeakUntil)):
            for j in window:
                if ev(g.right, j):
                    return True
                if not ev(g.left, j):
                    return False
            return isinstance(g, lt.WeakUntil)
        raise TypeError(g)

    return ev(f, i)


# -- semantics -----------------------------------------------------------------


@PROP
@given(ltl_formulas(), lassos())
def test_lasso_eval_matches_naive_reading(f, rho):
    for i in range(len(rho)):
        assert lt.lasso_eval(f, rho, i) == naive_eval(f, rho, i)


@PROP
@given(ltl_formulas(), lassos())
def test_nnf_preserves_truth(f, rho):
    g = lt.nnf(f)
    assert lt.lasso_eval(g, rho) == lt.lasso_eval(f, rho)
    assert not any(isinstance(s, (lt.Neg, lt.Imp)) for s in lt.subformulas(g))


@PROP
@given(ltl_formulas(), lassos())
def test_negation_flips_truth(f, rho):
    assert lt.lasso_eval(lt.negation(f), rho) != lt.lasso_eval(f, rho)


@PROP
@given(ltl_formulas(), lassos())
def test_text_round_trip(f, rho):
    g = lt.parse_formula(lt.to_text(f))
    assert lt.lasso_eval(g, rho) == lt.lasso_eval(f, rho)


@PROP
@given(ltl_formulas(), lassos())
def test_booleanize_round_trip(f, rho):
    text, props = lt.booleanize(f)
    assert "x" not in text and "'" not in text
    g = lt.unbooleanize(text, props)
    assert lt.lasso_eval(g, rho) == lt.lasso_eval(f, rho)


@PROP
@given(ltl_formulas(), lassos())
def test_shift_is_evaluation_one_step_later(f, rho):
    assert lt.lasso_eval(f, rho.shift()) == lt.lasso_eval(f, rho, 1)


def test_primed_literal_reads_the_next_position():
    f = lt.parse_formula("G (x' = x + 1)")
    up = Lasso(({"x": 0}, {"x": 1}), ({"x": 2}, {"x": 3}))
    assert not lt.lasso_eval(f, up)  # 3 -> 2 breaks the increment
    assert lt.lasso_eval(lt.parse_formula("x' = x + 1 U x = 3"), up)


def test_loop_must_be_nonempty():
    with pytest.raises(LassoError):
        Lasso(({"x": 0},), ())


# -- constructors ----------------------------------------------------------------


def test_smart_constructors_fold_constants():
    p = lt.parse_formula("x > 0")
    assert lt.t_and(p, lt.TT) == p
    assert lt.t_or(p, lt.TT) == lt.TT
    assert lt.t_globally(lt.t_globally(p)) == lt.t_globally(p)
    assert lt.t_eventually(lt.FF) == lt.FF
    assert lt.t_until(p, lt.FF) == lt.FF


def test_parser_precedence():
    f = lt.parse_formula("G x > 0 -> F y > 0 && y < 3")
    assert isinstance(f, lt.Imp)
    assert isinstance(f.left, lt.Globally)
    g = lt.parse_formula("x > 0 U y > 0 || x = 0")
    assert isinstance(g, lt.Disj)


def test_fused_operators():
    assert lt.parse_formula("GF x > 0") == lt.parse_formula("G (F (x > 0))")
    assert lt.parse_formula("XX x > 0") == lt.parse_formula("X (X (x > 0))")


# -- specifications ---------------------------------------------------------------


@pytest.mark.parametrize("path", sorted(FIXTURES.glob("*.rpltl")), ids=lambda p: p.stem)
def test_fixture_spec_round_trip(path):
    s = lt.parse(path.read_text())
    again = lt.parse(s.to_text())
    assert again == s


@pytest.mark.parametrize("text,needle", [
    ("var x : int; guarantee G y > 0;", "undeclared variable 'y'"),
    ("input e : int; guarantee G e' > 0;", "cannot be primed"),
    ("var x : int; var x : int;", "declared twice"),
    ("var b : bool;", "not supported"),
    ("var x : real;", "unknown sort"),
    ("var x : int; guarantee G x * x > 0;", "nonlinear"),
    ("var x : int; guarantee G (x > 0;", "expected ')'"),
    ("var x : int; guarantee x;", "comparison operator"),
    ("var G : int;", "expected a variable name"),
    ("var x : int; frobnicate;", "expected a declaration"),
    ("var x : int; guarantee x > 0 @;", "unexpected character"),
])
def test_parse_errors(text, needle):
    with pytest.raises(ParseError) as ei:
        lt.parse(text)
    assert needle in str(ei.value)
    assert ei.value.line >= 1


def test_parse_error_positions():
    with pytest.raises(ParseError) as ei:
        lt.parse("var x : int;\nguarantee G z > 0;\n")
    assert (ei.value.line, ei.value.col) == (2, 13)


def test_spec_formula_shape():
    s = lt.parse("input e : int; var x : int; assume G e > 0; guarantee G x > 0; guarantee F x = 3;")
    assert s.inputs == ("e",) and s.program_vars == ("x",)
    f = s.formula()
    assert isinstance(f, lt.Imp) and isinstance(f.right, lt.Conj)
    assert lt.parse("var x : int; guarantee G x > 0;").formula() == lt.parse_formula("G x > 0")


def test_closure_is_small_and_contains_the_literals():
    f = lt.parse_formula("x > 0 U y > 0")
    cl = lt.closure(f)
    assert f in cl
    assert set(lt.literals(f)) <= cl
    assert {lt.TT, lt.FF} <= cl
    # desugared operators: F a lives in the closure as true U a
    g = lt.parse_formula("F x > 0")
    assert lt.Until(lt.TT, g.arg) in lt.closure(g)
