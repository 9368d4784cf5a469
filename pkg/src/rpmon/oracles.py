"""Bounded semantic oracles over lasso words.

Everything here decides properties by explicit evaluation on finitely many
ultimately periodic words (or explicit state spaces), independently of the
SMT-based reasoning used during construction.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from . import formula as fm
from . import rpltl as lt
from .formula import Formula, is_primed, primed, unprimed
from .game import SAFETY, UNSAT, in_pseudo_language, trace_lasso
from .rpltl import Lasso
from .state import MonitorState


@dataclass(frozen=True)
class LassoBox:
    """Value range and shape bounds for sampled lassos."""

    radius: int = 2
    max_stem: int = 3
    max_loop: int = 2
    extra_values: tuple = ()

    def values(self) -> list:
        return sorted(set(range(-self.radius, self.radius + 1)) | set(self.extra_values))


def spec_constants(fs: Iterable[lt.LTL]) -> set:
    """Constants of the atoms, with their neighbours, so sampled words can cross thresholds."""
    out = set()
    for f in fs:
        for l in lt.literals(f):
            for a in fm.atoms(l.qf):
                for c in (a.bound - 1, a.bound, a.bound + 1):
                    out.add(c)
                    if len(a.coeffs) == 1:
                        k = a.coeffs[0][1]
                        if c % k == 0:
                            out.add(c // k)
    return out


def lasso_text(rho: Lasso) -> str:
    def val(v):
        return "{" + ", ".join(f"{k}={v[k]}" for k in sorted(v)) + "}"
    return "stem [" + " ".join(val(v) for v in rho.stem) + "] loop [" + " ".join(val(v) for v in rho.loop) + "]"


def sample_lassos(variables: Sequence[str], box: LassoBox, n: int, seed: int = 0) -> list:
    """n lassos with uniformly chosen shape and values; exhaustive when the space is small enough."""
    variables = sorted(variables)
    vals = box.values()
    valuations = [dict(zip(variables, t)) for t in itertools.product(vals, repeat=len(variables))]
    total = sum(len(valuations) ** (s + l) for s in range(box.max_stem + 1) for l in range(1, box.max_loop + 1))
    if total <= n:
        out = []
        for s in range(box.max_stem + 1):
            for l in range(1, box.max_loop + 1):
                for word in itertools.product(valuations, repeat=s + l):
                    out.append(Lasso(word[:s], word[s:]))
        return out
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        s = rng.randint(0, box.max_stem)
        l = rng.randint(1, box.max_loop)
        word = [rng.choice(valuations) if len(valuations) < 4096 else
                {v: rng.choice(vals) for v in variables} for _ in range(s + l)]
        out.append(Lasso(word[:s], word[s:]))
    return out


def steered_lassos(m, variables: Sequence[str], box: LassoBox, n: int, seed: int = 0, tries: int = 12) -> list:
    """Lassos whose steps are picked to keep the monitor away from UNSAT when possible.

    Uniform sampling mostly produces words that violate the guarantees in the
    first step; steering yields words on which SAFETY and OPEN verdicts persist.
    """
    variables = sorted(variables)
    vals = box.values()
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        s = rng.randint(0, box.max_stem)
        l = rng.randint(1, box.max_loop)
        word = [{v: rng.choice(vals) for v in variables}]
        q = m.init
        while len(word) < s + l:
            best = None
            for _ in range(tries):
                cand = {v: rng.choice(vals) for v in variables}
                env = _pair(word[-1], cand)
                q2 = m.step(q, env)
                if m.verdicts.get(q2) != UNSAT:
                    best = (cand, q2)
                    break
                if best is None:
                    best = (cand, q2)
            word.append(best[0])
            q = best[1]
        out.append(Lasso(word[:s], word[s:]))
    return out


def _pair(a: dict, b: dict) -> dict:
    env = dict(a)
    for k, v in b.items():
        env[k + "'"] = v
    return env


# ---------------------------------------------------------------------------
# results


@dataclass
class OracleResult:
    name: str
    checked: int = 0
    failures: list = field(default_factory=list)  # (lasso text, message)

    @property
    def ok(self) -> bool:
        return not self.failures

    def fail(self, rho: Optional[Lasso], msg: str) -> None:
        self.failures.append((lasso_text(rho) if rho is not None else "", msg))

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        s = f"{status} {self.name}: {self.checked} checked, {len(self.failures)} failure(s)"
        if self.failures:
            w, msg = self.failures[0]
            s += f"\n  counterexample: {w}\n  {msg}"
        return s


# ---------------------------------------------------------------------------
# monitor oracles


def monitor_run(m, rho: Lasso) -> tuple:
    """(states, positions, cycle start): states[k] is the monitor state after the first k steps."""
    seq, start = trace_lasso(m.init, len(rho.stem), len(rho.loop), lambda q, pos: m.step(q, rho.step_env(pos)))
    positions, p = [], 0
    for _ in seq:
        positions.append(p)
        p = rho.succ(p)
    return seq, positions, start


def check_state_correctness(m, phi: lt.LTL, lassos: Iterable[Lasso]) -> OracleResult:
    """For every prefix: the word satisfies phi iff its suffix satisfies the formula of the reached state."""
    res = OracleResult("state correctness")
    forms: dict = {}
    for rho in lassos:
        want = lt.lasso_eval(phi, rho)
        seq, positions, _ = monitor_run(m, rho)
        for q, pos in zip(seq, positions):
            res.checked += 1
            f = forms.get(q)
            if f is None:
                f = forms[q] = m.states[q].formula()
            got = lt.lasso_table(f, rho)[f][pos]
            if got != want:
                res.fail(rho, f"state {q} at position {pos}: formula gives {got}, specification gives {want}")
                break
    return res


def check_monitor_for_formula(m, phi: lt.LTL, lassos: Iterable[Lasso]) -> OracleResult:
    """UNSAT verdicts only on words outside the language; SAFETY without later UNSAT only inside it."""
    res = OracleResult("monitor verdicts")
    for rho in lassos:
        res.checked += 1
        seq, _, _ = monitor_run(m, rho)
        vs = [m.verdicts[q] for q in seq]
        member = lt.lasso_eval(phi, rho)
        if UNSAT in vs and member:
            k = vs.index(UNSAT)
            res.fail(rho, f"UNSAT verdict at step {k} (state {seq[k]}) on a word of the language")
        elif SAFETY in vs and UNSAT not in vs and not member:
            k = vs.index(SAFETY)
            res.fail(rho, f"SAFETY verdict at step {k} (state {seq[k]}), no UNSAT later, word not in the language")
    return res


def check_pseudo_language(phi: lt.LTL, game, prod, lassos: Iterable[Lasso]) -> tuple:
    """Pseudo-language membership in the game vs. the product, and the game vs. the formula."""
    eq = OracleResult("pseudo-language game = product")
    lang = OracleResult("pseudo-language game = formula")
    for rho in lassos:
        a = in_pseudo_language(game, rho)
        b = in_pseudo_language(prod, rho)
        c = lt.lasso_eval(phi, rho)
        eq.checked += 1
        lang.checked += 1
        if a != b:
            eq.fail(rho, f"game says {a}, product says {b}")
        if a != c:
            lang.fail(rho, f"game says {a}, formula says {c}")
    return eq, lang


# ---------------------------------------------------------------------------
# per-rule soundness


def _conj_ltl(fs) -> lt.LTL:
    return lt.t_and_all(fs)


def _imps(imps) -> lt.LTL:
    return lt.t_and_all(i.to_ltl() for i in imps)


def transformation_obligations(q1: MonitorState, q2: MonitorState) -> list:
    """(label, kind, f, g) checks for one state transformation; kind is 'iff' or 'implies'."""
    a1 = lt.t_and(_conj_ltl(q1.fa + q1.ea), _imps(q1.imp_a))
    g1 = lt.t_and(_conj_ltl(q1.fg + q1.eg), _imps(q1.imp_g))
    a2 = lt.t_and(_conj_ltl(q2.fa + q2.ea), _imps(q2.imp_a))
    g2 = lt.t_and(_conj_ltl(q2.fg + q2.eg), _imps(q2.imp_g))
    ea1, ea2 = _conj_ltl(q1.ea), _conj_ltl(q2.ea)
    eg1, eg2 = _conj_ltl(q1.eg), _conj_ltl(q2.eg)
    return [
        ("a: formulas with implied sets equivalent", "iff",
         lt.t_or(lt.negation(a1), g1), lt.t_or(lt.negation(a2), g2)),
        ("b: assumption implied set justified", "implies",
         lt.t_and(ea2, _imps(q1.imp_a)), _imps(q2.imp_a)),
        ("b: guarantee implied set justified", "implies",
         lt.t_and_all([ea2, eg2, _imps(q1.imp_g), _imps(q1.imp_a)]), _imps(q2.imp_g)),
        ("c: E_A only strengthened", "implies", ea2, ea1),
        ("c: E_G only strengthened", "implies", eg2, eg1),
    ]


class SoundnessAuditor:
    """Rule-application callback checking the local soundness conditions on sampled lassos."""

    def __init__(self, variables: Sequence[str], box: LassoBox = LassoBox(), samples: int = 150, seed: int = 0):
        self.lassos = sample_lassos(variables, box, samples, seed)
        self.applications = 0
        self.failures: list = []  # (rule, label, lasso text)

    def __call__(self, rule, q1: MonitorState, q2: MonitorState) -> None:
        self.applications += 1
        for label, kind, f, g in transformation_obligations(q1, q2):
            for rho in self.lassos:
                table_f = lt.lasso_eval(f, rho)
                table_g = lt.lasso_eval(g, rho)
                bad = table_f != table_g if kind == "iff" else (table_f and not table_g)
                if bad:
                    self.failures.append((str(rule), label, lasso_text(rho), q1.text(), q2.text()))
                    break

    @property
    def ok(self) -> bool:
        return not self.failures

    def result(self) -> OracleResult:
        res = OracleResult("rule soundness audit", checked=self.applications)
        for rule, label, w, s1, s2 in self.failures:
            res.failures.append((w, f"{rule} violates {label}\n  before: {s1}\n  after:  {s2}"))
        return res


# ---------------------------------------------------------------------------
# expansion


def full_letter(table, rho: Lasso):
    """The letter over every predicate of the table induced by the first step of rho."""
    from .expansion import letter_for
    return letter_for(table, range(len(table)), rho.step_env(0))


def check_expansion(phi: lt.LTL, rho: Lasso, table) -> bool:
    """rho satisfies phi iff its tail satisfies expand(phi, a) for the letter a of its first step."""
    from .expansion import expand
    a = full_letter(table, rho)
    return lt.lasso_eval(phi, rho) == lt.lasso_eval(expand(phi, a, table), rho.shift(1))


# ---------------------------------------------------------------------------
# explicit-state fixpoints


def box_states(xs: Sequence[str], radius: int) -> list:
    return [dict(zip(xs, t)) for t in itertools.product(range(-radius, radius + 1), repeat=len(xs))]


def compile_qf(f: Formula, names: Sequence[str]) -> Callable[[tuple], bool]:
    """f as a Python predicate over a tuple of values for ``names`` (same answers as fm.evaluate)."""
    pos = {n: k for k, n in enumerate(names)}

    def lin(coeffs, const=0):
        parts = [f"{c}*v[{pos[x]}]" for x, c in coeffs] + [str(const)]
        return "(" + " + ".join(parts) + ")"

    def src(g) -> str:
        if isinstance(g, fm.BoolConst):
            return "True" if g.value else "False"
        if isinstance(g, fm.Atom):
            return f"({lin(g.coeffs)} {'<=' if g.op == '<=' else '=='} {g.bound})"
        if isinstance(g, fm.Compare):
            op = {"=": "==", "!=": "!="}.get(g.op, g.op)
            return f"({lin(g.left.coeffs, g.left.const)} {op} {lin(g.right.coeffs, g.right.const)})"
        if isinstance(g, fm.Not):
            return f"(not {src(g.arg)})"
        if isinstance(g, (fm.And, fm.Or)):
            sep = " and " if isinstance(g, fm.And) else " or "
            return "(" + sep.join(src(a) for a in g.args) + ")"
        if isinstance(g, fm.Implies):
            return f"((not {src(g.left)}) or {src(g.right)})"
        raise fm.FormulaError("cannot evaluate quantified formulas concretely")

    missing = fm.free_vars(f) - set(pos)
    if missing:
        raise fm.FormulaError(f"no value for variable(s) {', '.join(sorted(missing))}")
    return eval("lambda v: " + src(f))  # generated from the formula tree only


def explicit_successors(inv: Formula, xs: Sequence[str], inputs: Sequence[str], radius: int) -> dict:
    """Successor map of the box states under inv; inputs range over the same box."""
    xs, inputs = list(xs), list(inputs)
    holds = compile_qf(inv, xs + inputs + [primed(x) for x in xs])
    span = range(-radius, radius + 1)
    states = list(itertools.product(span, repeat=len(xs)))
    ins = list(itertools.product(span, repeat=len(inputs)))
    succ = {}
    for s in states:
        out = set()
        for i in ins:
            si = s + i
            for t in states:
                if t not in out and holds(si + t):
                    out.add(t)
        succ[s] = out
    return succ


def explicit_reachable(gamma: Formula, succ: dict, xs: Sequence[str]) -> set:
    """States reachable from the gamma states that can take a step (those are the ones on runs)."""
    start = {k for k in succ if succ[k] and fm.evaluate(gamma, dict(zip(xs, k)))}
    seen, todo = set(start), list(start)
    while todo:
        k = todo.pop()
        for t in succ[k]:
            if t not in seen:
                seen.add(t)
                todo.append(t)
    return seen


def explicit_reach_all(gamma: Formula, beta: Formula, succ: dict, xs: Sequence[str]) -> bool:
    """Every infinite run from a gamma state visits beta (states without successors have no runs)."""
    good = {k for k in succ if fm.evaluate(beta, dict(zip(xs, k)))}
    changed = True
    while changed:
        changed = False
        for k, out in succ.items():
            if k not in good and all(t in good for t in out):
                good.add(k)
                changed = True
    return all(k in good for k in succ if fm.evaluate(gamma, dict(zip(xs, k))))


def random_transition_system(rng: random.Random, radius: int = 8) -> tuple:
    """(gamma, beta, inv, xs, inputs) with all states and inputs confined to the box."""
    nx = rng.choice((1, 1, 2))
    xs = ["x", "y"][:nx]
    inputs = ["i"] if rng.random() < 0.3 else []
    names = xs + inputs

    def term(vs, span=1):
        d = {v: rng.choice((-1, 0, 1)) for v in vs}
        return fm.Lin.from_dict({k: c for k, c in d.items() if c}, rng.randint(-2, 2) * span)

    def atom(vs):
        op = rng.choice(("<=", ">=", "="))
        lhs = term(vs)
        while lhs.is_const:
            lhs = term(vs)
        return fm.compare(op, lhs, fm.Lin.num(rng.randint(-radius + 2, radius - 2)))

    def box(vs):
        return fm.conj_all(fm.conj(fm.compare(">=", fm.Lin.var(v), -radius), fm.compare("<=", fm.Lin.var(v), radius))
                           for v in vs)

    updates = []
    for _ in range(rng.choice((1, 1, 2))):
        guard = atom(xs) if rng.random() < 0.6 else fm.TRUE
        eqs = []
        for x in xs:
            rhs = term(names) if rng.random() < 0.8 else fm.Lin.var(x) + fm.Lin.num(rng.choice((-1, 1)))
            if rng.random() < 0.25:
                eqs.append(fm.compare("<=", fm.Lin.var(primed(x)), rhs))
                eqs.append(fm.compare(">=", fm.Lin.var(primed(x)), rhs - fm.Lin.num(1)))
            else:
                eqs.append(fm.compare("=", fm.Lin.var(primed(x)), rhs))
        updates.append(fm.conj(guard, fm.conj_all(eqs)))
    inv = fm.conj_all([fm.disj_all(updates), box([primed(x) for x in xs]), box(inputs), box(xs)])
    gamma = fm.conj(atom(xs), box(xs)) if rng.random() < 0.8 else box(xs)
    beta = atom(xs)
    return fm.canonicalize(gamma), fm.canonicalize(beta), fm.canonicalize(inv), xs, inputs
