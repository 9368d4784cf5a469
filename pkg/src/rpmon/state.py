"""Monitor states: four formula sets plus two sets of implied formulas.

A state ``<F_A, E_A, F_G, E_G, Imp_A, Imp_G>`` stands for the temporal formula
``/\\(F_A u E_A) -> /\\(F_G u E_G)``.  The Imp sets collect facts of the shape
``G(gamma -> psi)`` that every path reaching the state guarantees.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional

from . import formula as fm
from . import rpltl as lt
from .formula import Formula
from .rpltl import FF, LTL, TT

IMP_KINDS = ("now", "X", "F", "G")


@dataclass(frozen=True)
class ImpFormula:
    """``G(gamma -> psi)`` with psi one of alpha, X alpha, F alpha, G alpha."""

    gamma: Formula
    kind: str
    alpha: Formula

    def __post_init__(self):
        if self.kind not in IMP_KINDS:
            raise ValueError(f"bad implied-formula kind {self.kind!r}")
        object.__setattr__(self, "gamma", fm.canonicalize(self.gamma))
        object.__setattr__(self, "alpha", fm.canonicalize(self.alpha))

    @cached_property
    def key(self) -> str:
        return f"(imp {self.kind} {self.gamma.key} {self.alpha.key})"

    def __lt__(self, other):
        return self.key < other.key

    @property
    def trivial(self) -> bool:
        return self.gamma == fm.FALSE or self.alpha == fm.TRUE

    @property
    def unconditional(self) -> bool:
        return self.gamma == fm.TRUE

    def consequent(self) -> LTL:
        a = lt.lit(self.alpha)
        if self.kind == "now":
            return a
        if self.kind == "X":
            return lt.t_next(a)
        if self.kind == "F":
            return lt.t_eventually(a)
        return lt.t_globally(a)

    def to_ltl(self) -> LTL:
        return lt.t_globally(lt.t_or(lt.lit(fm.negate(self.gamma)), self.consequent()))

    def text(self) -> str:
        psi = lt.to_text(self.consequent())
        return f"G({fm.pretty(self.gamma)} -> {psi})"

    def __str__(self):
        return self.text()


def now(alpha: Formula, gamma: Formula = fm.TRUE) -> ImpFormula:
    """Unconditional invariant; a conditional one is folded into its consequent."""
    if gamma != fm.TRUE:
        alpha = fm.disj(fm.negate(gamma), alpha)
    return ImpFormula(fm.TRUE, "now", alpha)


def is_e_eligible(f: LTL) -> bool:
    """Formulas allowed in E: first-order ones and top-level G / W over safety arguments."""
    if lt.is_temporal_free(f):
        return True
    if isinstance(f, (lt.Globally, lt.WeakUntil)):
        return lt.is_syntactic_safety(f)
    return False


def _elements(fs: Iterable[LTL]) -> dict:
    out = {}
    for f in fs:
        parts = f.args if isinstance(f, lt.Conj) else (f,)
        for p in parts:
            if p != TT:
                out[p.key] = p
    if FF.key in out:
        return {FF.key: FF}
    return out


def _sorted(d: dict) -> tuple:
    return tuple(d[k] for k in sorted(d))


@dataclass(frozen=True)
class MonitorState:
    fa: tuple
    ea: tuple
    fg: tuple
    eg: tuple
    imp_a: tuple
    imp_g: tuple

    @cached_property
    def key(self) -> str:
        parts = []
        for comp in (self.fa, self.ea, self.fg, self.eg):
            parts.append(" ".join(f.key for f in comp))
        for comp in (self.imp_a, self.imp_g):
            parts.append(" ".join(i.key for i in comp))
        return hashlib.sha256("\n|".join(parts).encode()).hexdigest()

    @cached_property
    def formula_key(self) -> str:
        """Key of the four formula sets only (ignores Imp)."""
        parts = [" ".join(f.key for f in c) for c in (self.fa, self.ea, self.fg, self.eg)]
        return hashlib.sha256("\n|".join(parts).encode()).hexdigest()

    def __eq__(self, other):
        return isinstance(other, MonitorState) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    # views ------------------------------------------------------------------

    def f(self, d: str) -> tuple:
        return self.fa if d == "A" else self.fg

    def e(self, d: str) -> tuple:
        return self.ea if d == "A" else self.eg

    def imp(self, d: str) -> tuple:
        return self.imp_a if d == "A" else self.imp_g

    def replace(self, d: Optional[str] = None, f=None, e=None, imp=None, **kw) -> "MonitorState":
        """Copy with components swapped; ``d`` selects which side f/e/imp refer to."""
        comps = dict(fa=self.fa, ea=self.ea, fg=self.fg, eg=self.eg,
                     imp_a=self.imp_a, imp_g=self.imp_g)
        if d is not None:
            s = "a" if d == "A" else "g"
            if f is not None:
                comps["f" + s] = f
            if e is not None:
                comps["e" + s] = e
            if imp is not None:
                comps["imp_" + s] = imp
        comps.update(kw)
        return make_state(**comps)

    @property
    def assumption_false(self) -> bool:
        return FF in self.fa or FF in self.ea

    @property
    def guarantee_false(self) -> bool:
        return FF in self.fg or FF in self.eg

    def assumption(self) -> LTL:
        return lt.t_and_all(self.fa + self.ea)

    def guarantee(self) -> LTL:
        return lt.t_and_all(self.fg + self.eg)

    def formula(self) -> LTL:
        """Formula(q) = /\\(F_A u E_A) -> /\\(F_G u E_G), in canonical NNF."""
        return lt.t_or(lt.negation(self.assumption()), self.guarantee())

    def is_trivial(self) -> bool:
        return self.formula() in (TT, FF)

    def to_dict(self) -> dict:
        return {
            "F_A": [lt.to_text(f) for f in self.fa],
            "E_A": [lt.to_text(f) for f in self.ea],
            "F_G": [lt.to_text(f) for f in self.fg],
            "E_G": [lt.to_text(f) for f in self.eg],
            "Imp_A": [i.text() for i in self.imp_a],
            "Imp_G": [i.text() for i in self.imp_g],
        }

    def text(self) -> str:
        def s(c):
            return "{" + ", ".join(lt.to_text(f) if isinstance(f, LTL) else f.text() for f in c) + "}"
        return "<" + ", ".join(s(c) for c in (self.fa, self.ea, self.fg, self.eg, self.imp_a, self.imp_g)) + ">"

    __str__ = text


def make_state(fa=(), ea=(), fg=(), eg=(), imp_a=(), imp_g=()) -> MonitorState:
    """Canonical state: split conjunctions, move eligible F members into E, absorb false."""
    sides = []
    for f_set, e_set in ((fa, ea), (fg, eg)):
        f_d = _elements(f_set)
        e_d = _elements(e_set)
        for k in list(f_d):
            if is_e_eligible(f_d[k]):
                e_d[k] = f_d.pop(k)
        if FF.key in f_d or FF.key in e_d:
            f_d = e_d = {FF.key: FF}
        sides.append((_sorted(f_d), _sorted(e_d)))
    imps = []
    for s in (imp_a, imp_g):
        d = {i.key: i for i in s if not i.trivial}
        imps.append(tuple(d[k] for k in sorted(d)))
    (fa2, ea2), (fg2, eg2) = sides
    return MonitorState(fa2, ea2, fg2, eg2, imps[0], imps[1])


TRUE_STATE = make_state(fa=(FF,))
UNSAT_STATE = make_state(fg=(FF,))


def collapse_trivial(q: MonitorState) -> MonitorState:
    """Representative for states whose formula is a constant."""
    if q.assumption_false:
        return TRUE_STATE
    if q.guarantee_false and not q.fa and not q.ea:
        return UNSAT_STATE
    return q


def initial_state(assumption: LTL, guarantee: LTL) -> MonitorState:
    """Partition the conjuncts of both sides; Imp sets start empty."""
    return make_state(fa=(lt.nnf(assumption),), fg=(lt.nnf(guarantee),))


def qf_members(fs: Iterable[LTL]) -> list:
    return [lt.to_qf(f) for f in fs if lt.is_temporal_free(f)]
