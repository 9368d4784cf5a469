"""Solver driver checked against exhaustive enumeration on bounded boxes."""

import itertools

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from rpmon import formula as fm
from rpmon.formula import Lin
from rpmon.smt import (
    QueryCache, SexpError, SmtSession, SolverConfig, SolverError, parse_sexps,
    sexp_to_formula, tokenize,
)

from strategies import qf_formulas

NAMES = ("x", "y")
BOX = range(-4, 5)


def box(names=NAMES, rng=BOX):
    for vals in itertools.product(rng, repeat=len(names)):
        yield dict(zip(names, vals))


def bounded(f, names=NAMES, lo=-4, hi=4):
    """f restricted to the enumeration box, so brute force is exact."""
    bounds = [fm.compare(">=", Lin.var(v), lo) for v in names] + \
             [fm.compare("<=", Lin.var(v), hi) for v in names]
    return fm.conj_all([f] + bounds)


SLOW = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@SLOW
@given(qf_formulas(names=NAMES))
def test_check_sat_matches_enumeration(smt, raw):
    f = bounded(fm.canonicalize(raw))
    brute = any(fm.evaluate(f, env) for env in box())
    v = smt.check_sat(f)
    assert not v.is_unknown
    assert v.is_sat == brute


@SLOW
@given(qf_formulas(names=NAMES), qf_formulas(names=NAMES))
def test_entails_matches_enumeration(smt, a, b):
    a = bounded(fm.canonicalize(a))
    b = fm.canonicalize(b)
    brute = all(fm.evaluate(b, env) for env in box() if fm.evaluate(a, env))
    assert smt.entails(a, b) is brute


@SLOW
@given(qf_formulas(names=NAMES))
def test_qe_exists_matches_enumeration(smt, raw):
    body = bounded(fm.canonicalize(raw), names=("y",))
    q = smt.qe(fm.exists(["y"], body))
    if q is None:
        return  # refusal (e.g. a divisibility constraint) is allowed, a wrong answer is not
    assert fm.is_quantifier_free(q)
    for x in BOX:
        brute = any(fm.evaluate(body, {"x": x, "y": y}) for y in BOX)
        assert fm.evaluate(q, {"x": x}) == brute


@SLOW
@given(qf_formulas(names=NAMES))
def test_qe_forall_matches_enumeration(smt, raw):
    f = fm.canonicalize(raw)
    guard = fm.conj(fm.compare(">=", Lin.var("y"), -4), fm.compare("<=", Lin.var("y"), 4))
    q = smt.qe(fm.forall(["y"], fm.disj(fm.negate(guard), f)))
    if q is None:
        return
    for x in BOX:
        brute = all(fm.evaluate(f, {"x": x, "y": y}) for y in BOX)
        assert fm.evaluate(q, {"x": x}) == brute


def test_divisibility_is_integer_reasoning(smt):
    # 2x = 1 has rational but no integer solutions
    assert smt.check_sat(fm.compare("=", Lin.var("x").scale(2), 1)).is_unsat
    assert smt.check_sat(fm.conj(fm.compare(">", Lin.var("x"), 0),
                                 fm.compare("<", Lin.var("x"), 1))).is_unsat


def test_constants_short_circuit(smt):
    before = smt.calls
    assert smt.check_sat(fm.TRUE).is_sat
    assert smt.check_sat(fm.FALSE).is_unsat
    assert smt.calls == before


def test_qe_refuses_divisibility(smt):
    # exists y. x = 2y needs "x mod 2 = 0", which has no linear-atom form
    f = fm.exists(["y"], fm.compare("=", Lin.var("x"), Lin.var("y").scale(2)))
    assert smt.qe(f) is None


def test_cache_ignores_bound_variable_names():
    cache = QueryCache()
    with SmtSession(cache=cache) as s:
        body = lambda v: fm.conj(fm.compare("=", Lin.var("x"), Lin.var(v) + Lin.num(3)),
                                 fm.compare(">", Lin.var(v), 0))
        a = s.qe(fm.exists(["a"], body("a")))
        calls = s.calls
        b = s.qe(fm.exists(["b"], body("b")))
        assert s.calls == calls
        assert a == b
        assert cache.hits >= 1


def test_cache_is_bounded():
    c = QueryCache(size=3)
    for i in range(10):
        c.put(i, i)
    assert len(c) == 3
    assert c.get(0) is None and c.get(9) == 9


def test_primed_names_survive_the_round_trip(smt):
    f = fm.conj(fm.compare("=", Lin.var("x'"), Lin.var("x") + Lin.num(1)),
                fm.compare(">", Lin.var("x"), 2))
    q = smt.qe(fm.exists(["x"], f))
    assert q is not None
    assert fm.free_vars(q) == {"x'"}
    assert smt.entails(q, fm.compare(">", Lin.var("x'"), 3)) is True
    assert smt.entails(fm.compare(">", Lin.var("x'"), 3), q) is True


def test_missing_executable_raises():
    with SmtSession(SolverConfig(executable="/nonexistent/solver-binary")) as s:
        with pytest.raises(SolverError):
            s.check_sat(fm.compare(">", Lin.var("x"), 0))


def test_solver_error_line_raises(smt):
    with pytest.raises(SolverError):
        smt.raw("(assert undeclared_symbol)\n")
    # the session stays usable afterwards
    assert smt.check_sat(fm.compare(">", Lin.var("x"), 0)).is_sat


def test_env_var_selects_solver(monkeypatch):
    monkeypatch.setenv("RPMON_SOLVER", "z3")
    assert SolverConfig().command() == ["z3", "-in"]
    assert SolverConfig(executable="cvc5 --lang smt2").command() == ["cvc5", "--lang", "smt2"]


def test_config_rejects_bad_timeout():
    with pytest.raises(ValueError):
        SolverConfig(timeout_ms=0)


@pytest.mark.parametrize("text,expected", [
    ("(a (b c) d)", [["a", ["b", "c"], "d"]]),
    ("|x'| (- 3)", ["|x'|", ["-", "3"]]),
    ("; comment\n(goals)", [["goals"]]),
])
def test_sexp_parsing(text, expected):
    assert parse_sexps(text) == expected


@pytest.mark.parametrize("text", ["(a (b", "a)"])
def test_sexp_errors(text):
    with pytest.raises(SexpError):
        parse_sexps(text)


def test_sexp_to_formula_arith():
    e = parse_sexps("(<= (+ (* 2 x) (- y) 3) 7)")[0]
    f = sexp_to_formula(e)
    for env in box():
        assert fm.evaluate(f, env) == (2 * env["x"] - env["y"] + 3 <= 7)


def test_tokenize_keeps_quoted_symbols():
    assert "|x'|" in tokenize("(= |x'| 1)")
