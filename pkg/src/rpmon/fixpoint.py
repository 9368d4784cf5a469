"""Bounded fixpoint reasoning over a transition invariant.

``inv`` is a first-order formula over X, I and X' that every step satisfies.
The helpers here decide inductiveness of candidate invariants, whether all
runs from a region eventually reach a target, and the forward reachable set.
Every answer is either a definite ``True`` or a refusal (``False``/``None``);
nothing is claimed on timeouts or exhausted budgets.
"""

from __future__ import annotations

import itertools
import logging
import shlex
import subprocess
from dataclasses import dataclass
from typing import Iterable, Optional

from . import formula as fm
from .formula import Formula, Lin, is_primed, primed, unprimed
from .smt import SexpError, SmtSession, parse_sexps, sexp_to_formula

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FixpointBudget:
    max_iterations: int = 25
    timeout_ms: int = 4000
    ranking: bool = True  # try a linear ranking argument when plain iteration gives up

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


def state_vars(fs: Iterable[Formula], inputs: Iterable[str]) -> list:
    """Unprimed program variables mentioned (directly or via a primed copy)."""
    inputs = set(inputs)
    out = set()
    for f in fs:
        for v in fm.free_vars(f):
            b = unprimed(v)
            if b not in inputs:
                out.add(b)
    return sorted(out)


def _next_vars(xs) -> list:
    return [primed(x) for x in xs]


def _shift(f: Formula, xs) -> Formula:
    """f[X -> X']."""
    return fm.rename(f, {x: primed(x) for x in xs})


def _entails(smt: SmtSession, a: Formula, b: Formula) -> bool:
    return smt.entails(a, b) is True


# ---------------------------------------------------------------------------
# invariants


def check_inductive(theta: Formula, gamma: Formula, alpha: Formula, inv: Formula,
                    smt: SmtSession, inputs: Iterable[str] = ()) -> bool:
    """gamma |= theta, theta |= alpha and theta /\\ inv |= theta'."""
    xs = state_vars([theta, gamma, alpha, inv], inputs)
    return (_entails(smt, gamma, theta)
            and _entails(smt, theta, alpha)
            and _entails(smt, fm.conj(theta, inv), _shift(theta, xs)))


def post_image(r: Formula, inv: Formula, xs, inputs, smt: SmtSession,
               timeout_ms: Optional[int] = None) -> Optional[Formula]:
    """Quantifier-free successors of r under inv, or None if elimination fails."""
    inputs = sorted(set(inputs))
    pre = {x: f"{x}__pre" for x in xs}
    body = fm.conj(fm.rename(r, pre), fm.rename(inv, {**pre, **{primed(x): x for x in xs}}))
    return smt.qe(fm.exists(list(pre.values()) + inputs, body), timeout_ms)


MAX_REACH_CHARS = 2000


def reachable_set(gamma: Formula, inv: Formula, smt: SmtSession, inputs: Iterable[str] = (),
                  budget: FixpointBudget = FixpointBudget()) -> Optional[Formula]:
    """States reachable from the gamma states that have an inv-successor, or None.

    Positions of infinite runs always have a successor, so dropping gamma
    states without one loses nothing.  The result is quantifier-free and
    certified closed under the image.
    """
    inputs = set(inputs)
    xs = state_vars([gamma, inv], inputs)
    r = smt.qe(fm.exists(sorted(inputs) + _next_vars(xs), fm.conj(gamma, inv)), budget.timeout_ms)
    if r is None:
        return None
    for _ in range(budget.max_iterations):
        img = post_image(r, inv, xs, inputs, smt, budget.timeout_ms)
        if img is None:
            return None
        if _entails(smt, img, r):
            return r  # image(r) -> r: certified inductive
        r = tidy(fm.disj(r, img), smt)
        if len(r.key) > MAX_REACH_CHARS:
            return None  # no compact hull; the union would only keep growing
    return None


def tidy(f: Formula, smt: SmtSession) -> Formula:
    """An equivalent conjunction of (shifted) atoms of f when one exists, else f.

    Merges interval unions such as ``x = 1 || x > 1`` into ``x > 0``.
    """
    pool = {}
    for a in fm.atoms(f):
        pool[a.key] = a
        if a.op == "<=":
            for d in (-1, 1):
                b = fm.Atom("<=", a.coeffs, a.bound + d)
                pool[b.key] = b
    kept = []
    for a in sorted(pool.values(), key=lambda a: a.key):
        for lit in (a, fm.negate(a)):
            if _entails(smt, f, lit):
                kept.append(lit)
                break
    hull = fm.conj_all(kept)
    if hull == fm.TRUE or not _entails(smt, hull, f):
        return f
    for lit in list(kept):
        rest = [k for k in kept if k is not lit]
        if _entails(smt, fm.conj_all(rest), lit):
            kept = rest
    return fm.conj_all(kept)


# ---------------------------------------------------------------------------
# reachability


def _pre_all(b: Formula, inv: Formula, xs, inputs, smt: SmtSession, timeout_ms: int) -> Formula:
    """forall I X'. inv -> b[X -> X'], eliminated when the solver can."""
    body = fm.disj(fm.negate(inv), _shift(b, xs))
    q = fm.forall(sorted(inputs) + _next_vars(xs), body)
    e = smt.qe(q, timeout_ms)
    return e if e is not None else q


MAX_NESTED_CHARS = 20000  # give up once a quantified iterate grows beyond this


def _kleene(gamma: Formula, start: Formula, inv: Formula, xs, inputs, smt: SmtSession,
            budget: FixpointBudget) -> Optional[bool]:
    b = start
    if _entails(smt, gamma, b):
        return True
    for _ in range(budget.max_iterations):
        nxt = fm.disj(b, _pre_all(b, inv, xs, inputs, smt, budget.timeout_ms))
        if _entails(smt, gamma, nxt):
            return True
        if _entails(smt, nxt, b):
            return False  # converged without covering gamma
        if len(nxt.key) > MAX_NESTED_CHARS:
            return None
        b = nxt
    return None


def reach_entails(gamma: Formula, beta: Formula, inv: Formula, smt: SmtSession,
                  inputs: Iterable[str] = (), budget: FixpointBudget = FixpointBudget()) -> Optional[bool]:
    """Whether every inv-run from a gamma state eventually satisfies beta.

    True is definite.  False means the iteration converged without covering
    gamma; None means the budget ran out.
    """
    inputs = set(inputs)
    xs = state_vars([gamma, beta, inv], inputs)
    if _entails(smt, gamma, beta):
        return True
    if budget.ranking:
        # a ranking argument covers long chains (x counting up to a large bound)
        # that plain iteration would need one step per value for
        for s in _support_candidates(gamma, inv, xs, inputs, smt, budget):
            if not _ranking_certifies(s, beta, inv, xs, smt):
                continue
            seed = fm.disj(beta, s)
            if _entails(smt, gamma, seed):
                return True
            if _kleene(gamma, seed, inv, xs, inputs, smt, budget):
                return True
    return _kleene(gamma, beta, inv, xs, inputs, smt, budget)


def _support_candidates(gamma, inv, xs, inputs, smt, budget):
    yield fm.TRUE
    p1 = post_image(fm.TRUE, inv, xs, inputs, smt, budget.timeout_ms)
    if p1 is not None:
        yield p1
        p2 = post_image(p1, inv, xs, inputs, smt, budget.timeout_ms)
        if p2 is not None:
            yield p2
    r = reachable_set(gamma, inv, smt, inputs, budget)
    if r is not None:
        yield r


def ranking_templates(xs) -> list:
    """Linear terms with coefficients in {-1, 0, 1}, fewer variables first."""
    xs = list(xs)
    width = len(xs) if len(xs) <= 3 else 1
    out = []
    for n in range(1, width + 1):
        for combo in itertools.combinations(xs, n):
            for signs in itertools.product((1, -1), repeat=n):
                out.append(Lin.from_dict(dict(zip(combo, signs))))
    return out


def _ranking_certifies(s: Formula, beta: Formula, inv: Formula, xs, smt: SmtSession) -> bool:
    """s is closed until beta, and some template ranking decreases and is bounded below on s /\\ !beta."""
    pending = fm.conj(s, fm.negate(beta))
    if smt.check_sat(pending).is_unsat:
        return True
    step = fm.conj(pending, inv)
    if not _entails(smt, step, fm.disj(_shift(beta, xs), _shift(s, xs))):
        return False
    still = fm.conj(step, fm.negate(_shift(beta, xs)))
    for r in ranking_templates(xs):
        r_next = Lin.from_dict({primed(v): c for v, c in r.coeffs}, r.const)
        if not _entails(smt, still, fm.compare("<=", r_next, r - Lin.num(1))):
            continue
        c = "__rank_bound"
        while c in fm.free_vars(pending):
            c += "_"
        bounded = fm.exists([c], fm.forall(xs, fm.disj(fm.negate(pending),
                                                        fm.compare(">=", r, Lin.var(c)))))
        # a closed formula: elimination decides it outright
        if smt.qe(bounded) == fm.TRUE:
            log.debug("ranking %s certifies reachability", r)
            return True
    return False


# ---------------------------------------------------------------------------
# external Horn-clause solver


def chc_query(gamma: Formula, alpha: Formula, inv: Formula, inputs: Iterable[str] = ()) -> tuple:
    """HORN-logic script asking for an inductive strengthening of alpha; returns (script, state vars)."""
    inputs = set(inputs)
    xs = state_vars([gamma, alpha, inv], inputs)
    allv = sorted(fm.free_vars(gamma) | fm.free_vars(inv) | fm.free_vars(alpha) | set(xs)
                  | {primed(x) for x in xs})
    decl = " ".join(f"({fm.smt_symbol(v)} Int)" for v in allv)
    app = "(Inv " + " ".join(fm.smt_symbol(x) for x in xs) + ")" if xs else "Inv"
    app_next = "(Inv " + " ".join(fm.smt_symbol(primed(x)) for x in xs) + ")" if xs else "Inv"
    sig = " ".join("Int" for _ in xs)
    lines = [
        "(set-logic HORN)",
        f"(declare-fun Inv ({sig}) Bool)",
        f"(assert (forall ({decl}) (=> {fm.to_smt(gamma)} {app})))",
        f"(assert (forall ({decl}) (=> (and {app} {fm.to_smt(inv)}) {app_next})))",
        f"(assert (forall ({decl}) (=> (and {app} (not {fm.to_smt(alpha)})) false)))",
        "(check-sat)",
        "(get-model)",
    ]
    return "\n".join(lines) + "\n", xs


def chc_invariant(gamma: Formula, alpha: Formula, inv: Formula, inputs: Iterable[str],
                  command: str, timeout_s: float = 10.0) -> Optional[Formula]:
    """Ask an external CHC solver for theta; the caller re-checks it before use."""
    script, xs = chc_query(gamma, alpha, inv, inputs)
    try:
        proc = subprocess.run(shlex.split(command), input=script, capture_output=True,
                              text=True, timeout=timeout_s)
    except (OSError, subprocess.TimeoutExpired) as e:
        log.debug("CHC hook failed: %s", e)
        return None
    out = proc.stdout.strip()
    if not out.startswith("sat"):
        return None
    try:
        for e in parse_sexps(out[3:]):
            for d in _model_defs(e):
                if len(d) == 5 and d[0] == "define-fun" and d[1] == "Inv":
                    params = [p[0] for p in d[2]]
                    env = dict(zip(params, xs))
                    return fm.canonicalize(sexp_to_formula(d[4], env=env))
    except (SexpError, fm.FormulaError, ValueError) as e:
        log.debug("CHC model not usable: %s", e)
    return None


def _model_defs(e):
    if isinstance(e, list) and e and e[0] == "define-fun":
        yield e
    elif isinstance(e, list):
        for x in e:
            if isinstance(x, list):
                yield from _model_defs(x)
