import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpmon import formula as fm
from rpmon.formula import Lin
from rpmon.oracles import compile_qf

from strategies import envs, qf_formulas, raw_comparisons


@given(qf_formulas(), envs())
def test_canonicalize_preserves_truth(f, env):
    assert fm.evaluate(fm.canonicalize(f), env) == fm.evaluate(f, env)


@given(qf_formulas(), envs())
def test_negate_flips_truth(f, env):
    assert fm.evaluate(fm.negate(f), env) != fm.evaluate(f, env)


@given(qf_formulas())
def test_canonicalize_is_idempotent(f):
    c = fm.canonicalize(f)
    assert fm.canonicalize(c) == c


@given(raw_comparisons(), raw_comparisons(), envs())
def test_junctions_match_python_logic(a, b, env):
    va, vb = fm.evaluate(a, env), fm.evaluate(b, env)
    assert fm.evaluate(fm.conj(fm.canonicalize(a), fm.canonicalize(b)), env) == (va and vb)
    assert fm.evaluate(fm.disj(fm.canonicalize(a), fm.canonicalize(b)), env) == (va or vb)


def test_atoms_are_normalised_to_le_and_eq():
    x = Lin.var("x")
    assert fm.compare("<", x, Lin.num(3)) == fm.compare("<=", x, Lin.num(2))
    assert fm.compare(">=", x, Lin.num(1)) == fm.negate(fm.compare("<=", x, Lin.num(0)))
    assert fm.pretty(fm.compare(">=", x, Lin.num(1))) == "x > 0"


def test_integer_tightening_of_divisible_coefficients():
    two_x = Lin.from_dict({"x": 2})
    # 2x <= 3 has the same integer solutions as x <= 1
    assert fm.compare("<=", two_x, Lin.num(3)) == fm.compare("<=", Lin.var("x"), Lin.num(1))
    # 2x = 3 has none
    assert fm.compare("=", two_x, Lin.num(3)) == fm.FALSE


def test_constant_comparisons_fold():
    assert fm.compare("<", Lin.num(1), Lin.num(2)) == fm.TRUE
    assert fm.compare("=", Lin.num(1), Lin.num(2)) == fm.FALSE


def test_complementary_literals_collapse():
    a = fm.compare("<=", Lin.var("x"), Lin.num(0))
    assert fm.conj(a, fm.negate(a)) == fm.FALSE
    assert fm.disj(a, fm.negate(a)) == fm.TRUE


def test_free_vars_skip_bound_names():
    body = fm.compare("=", Lin.var("x"), Lin.var("y"))
    assert fm.free_vars(fm.exists(["y"], body)) == {"x"}


def test_rename_and_prime():
    f = fm.compare("<=", Lin.var("x"), Lin.var("y"))
    g = fm.prime(f)
    assert fm.free_vars(g) == {"x'", "y'"}
    assert fm.unprime(g) == f
    with pytest.raises(fm.FormulaError):
        fm.prime(g)


def test_substitution_avoids_capture():
    # exists y. x < y, with x := y, must not become exists y. y < y
    f = fm.exists(["y"], fm.compare("<", Lin.var("x"), Lin.var("y")))
    g = fm.substitute(f, {"x": Lin.var("y")})
    assert "y" in fm.free_vars(g)


@settings(max_examples=50)
@given(qf_formulas(depth=2))
def test_alpha_normalize_ignores_bound_names(f):
    body = fm.canonicalize(f)
    a = fm.exists(["x"], body)
    b = fm.exists(["z"], fm.rename(body, {"x": "z"}))
    assert fm.alpha_normalize(a) == fm.alpha_normalize(b)


def test_evaluate_rejects_quantifiers_and_missing_values():
    with pytest.raises(fm.FormulaError):
        fm.evaluate(fm.exists(["x"], fm.compare("=", Lin.var("x"), Lin.num(0))), {})
    with pytest.raises(fm.FormulaError):
        fm.evaluate(fm.compare("=", Lin.var("x"), Lin.num(0)), {})


@given(st.integers(-5, 5), st.integers(-5, 5))
def test_smt_rendering_is_stable(a, b):
    f = fm.compare("<=", Lin.from_dict({"x": a, "y'": b}), Lin.num(a - b))
    assert fm.to_smt(f) == fm.to_smt(fm.canonicalize(f))


@settings(max_examples=300, deadline=None)
@given(qf_formulas(), envs())
def test_compiled_predicate_matches_evaluate(raw, env):
    names = sorted(env)
    f = fm.canonicalize(raw)
    vals = tuple(env[n] for n in names)
    assert compile_qf(raw, names)(vals) == fm.evaluate(raw, env)
    assert compile_qf(f, names)(vals) == fm.evaluate(f, env)
