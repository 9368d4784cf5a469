"""Temporal expansion against predicate letters and raw successor computation.

A letter is a partial truth assignment to predicates from a ``PredicateTable``:
predicates a state never looks at are simply absent ("don't care").  Each state
branches only on the predicates that its formulas evaluate in the current step,
so a concrete pair of valuations matches exactly one of the state's letters.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Optional

from . import formula as fm
from . import rpltl as lt
from .formula import Formula, is_primed, unprimed
from .rpltl import FF, LTL, TT
from .smt import SmtSession
from .state import MonitorState, make_state

log = logging.getLogger(__name__)


class ExpansionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# predicates


@dataclass
class PredicateTable:
    """Stable ids for predicates; entries are canonical atoms or (for generated ones) any QF formula."""

    preds: list = field(default_factory=list)
    kinds: list = field(default_factory=list)
    index: dict = field(default_factory=dict)
    prop_preds: list = field(default_factory=list)  # literals over X whose truth is propagated
    gen_preds: list = field(default_factory=list)
    inputs: frozenset = frozenset()
    max_gen_preds: int = 32

    def add(self, f: Formula, kind: str = "atom") -> int:
        f = fm.canonicalize(f)
        base = _base(f)
        hit = self.index.get(base.key)
        if hit is not None:
            return hit
        pid = len(self.preds)
        self.preds.append(base)
        self.kinds.append(kind)
        self.index[base.key] = pid
        return pid

    def lookup(self, f: Formula) -> tuple:
        """(id, polarity) of a literal or registered predicate."""
        f = fm.canonicalize(f)
        base = _base(f)
        pid = self.index.get(base.key)
        if pid is None:
            raise ExpansionError(f"predicate not registered: {fm.pretty(f)}")
        return pid, base is f or base == f

    def add_prop_pred(self, lit: Formula) -> None:
        lit = fm.canonicalize(lit)
        if any(p.key == lit.key for p in self.prop_preds):
            return
        self.add(lit, "prop")
        self.prop_preds.append(lit)

    def add_gen_pred(self, f: Formula) -> bool:
        f = fm.canonicalize(f)
        if any(g.key == f.key for g in self.gen_preds):
            return False
        if len(self.gen_preds) >= self.max_gen_preds:
            return False
        self.add(f, "gen")
        self.gen_preds.append(f)
        return True

    def propagation_targets(self) -> list:
        return list(self.prop_preds) + list(self.gen_preds)

    def __len__(self):
        return len(self.preds)

    def pretty(self, pid: int) -> str:
        return fm.pretty(self.preds[pid])

    @classmethod
    def from_formulas(cls, formulas: Iterable[LTL], inputs: Iterable[str] = (),
                      default_prop_preds: bool = True) -> "PredicateTable":
        """Atoms of the formulas, plus the default propagation predicates."""
        t = cls(inputs=frozenset(inputs))
        atoms = []
        for f in formulas:
            for l in lt.literals(f):
                atoms.extend(sorted(fm.atoms(l.qf), key=lambda a: a.key))
        for a in atoms:
            t.add(a, "atom")
        if default_prop_preds:
            for a in atoms:
                if _over_program_vars(a, t.inputs):
                    t.add_prop_pred(a)
                    t.add_prop_pred(fm.negate(a))
            for a in atoms:
                c = _constant_update(a)
                if c is not None:
                    t.add_prop_pred(c)
        return t


def _base(f: Formula) -> Formula:
    if isinstance(f, fm.Not) and isinstance(f.arg, fm.Atom):
        return f.arg
    return f


def _over_program_vars(f: Formula, inputs) -> bool:
    vs = fm.free_vars(f)
    return bool(vs) and not any(is_primed(v) or v in inputs for v in vs)


def _constant_update(a: Formula) -> Optional[Formula]:
    """x = c for an atom x' = c."""
    if isinstance(a, fm.Atom) and a.op == "=" and len(a.coeffs) == 1:
        (v, c), = a.coeffs
        if is_primed(v) and a.bound % c == 0:
            return fm.compare("=", fm.Lin.var(unprimed(v)), a.bound // c)
    return None


# ---------------------------------------------------------------------------
# letters


@dataclass(frozen=True)
class Letter:
    """Truth values for some predicate ids; ids outside ``assignment`` are don't-care."""

    assignment: tuple  # sorted ((id, bool), ...)

    @cached_property
    def values(self) -> dict:
        return dict(self.assignment)

    @property
    def true_ids(self) -> list:
        return [i for i, v in self.assignment if v]

    @property
    def false_ids(self) -> list:
        return [i for i, v in self.assignment if not v]

    def get(self, pid: int) -> Optional[bool]:
        return self.values.get(pid)

    def formula(self, table: PredicateTable) -> Formula:
        parts = [table.preds[i] if v else fm.negate(table.preds[i]) for i, v in self.assignment]
        return fm.conj_all(parts)

    def holds(self, table: PredicateTable, env: Mapping[str, int]) -> bool:
        return all(fm.evaluate(table.preds[i], env) == v for i, v in self.assignment)

    def key(self) -> str:
        return ",".join(f"{'' if v else '!'}{i}" for i, v in self.assignment)

    def to_json(self) -> dict:
        return {"true": self.true_ids, "false": self.false_ids}

    @staticmethod
    def of(d: Mapping[int, bool]) -> "Letter":
        return Letter(tuple(sorted(d.items())))


EMPTY_LETTER = Letter(())


def letter_for(table: PredicateTable, ids: Iterable[int], env: Mapping[str, int]) -> Letter:
    """The letter over ``ids`` that a concrete valuation pair satisfies."""
    return Letter.of({i: fm.evaluate(table.preds[i], env) for i in ids})


# ---------------------------------------------------------------------------
# expansion


def expand(f: LTL, a: Letter, table: PredicateTable) -> LTL:
    """Evaluate the current step of f under letter a; what remains is the obligation from the next step on."""
    return _expand(lt.nnf(f) if _needs_nnf(f) else f, a, table)


def _needs_nnf(f: LTL) -> bool:
    return any(isinstance(g, (lt.Neg, lt.Imp)) for g in lt.subformulas(f))


def _lit_value(l: lt.Lit, a: Letter, table: PredicateTable) -> bool:
    pid, pol = table.lookup(l.qf)
    v = a.get(pid)
    if v is None:
        raise ExpansionError(f"letter does not decide {fm.pretty(l.qf)}")
    return v if pol else not v


def _expand(f: LTL, a: Letter, table: PredicateTable) -> LTL:
    if isinstance(f, lt.Const):
        return f
    if isinstance(f, lt.Lit):
        return TT if _lit_value(f, a, table) else FF
    if isinstance(f, lt.Conj):
        return lt.t_and_all(_expand(g, a, table) for g in f.args)
    if isinstance(f, lt.Disj):
        return lt.t_or_all(_expand(g, a, table) for g in f.args)
    if isinstance(f, lt.Next):
        return f.arg
    if isinstance(f, lt.Until):
        return lt.t_or(_expand(f.right, a, table), lt.t_and(_expand(f.left, a, table), f))
    if isinstance(f, lt.WeakUntil):
        return lt.t_or(_expand(f.right, a, table), lt.t_and(_expand(f.left, a, table), f))
    if isinstance(f, lt.Eventually):
        return lt.t_or(_expand(f.arg, a, table), f)
    if isinstance(f, lt.Globally):
        return lt.t_and(_expand(f.arg, a, table), f)
    raise ExpansionError(f"unexpected node in expansion: {f!r}")


def expand_partial(f: LTL, values: Mapping[int, bool], table: PredicateTable) -> Optional[LTL]:
    """Three-valued expansion: None when the result still depends on an unassigned predicate."""
    if isinstance(f, lt.Const):
        return f
    if isinstance(f, lt.Lit):
        pid, pol = table.lookup(f.qf)
        v = values.get(pid)
        if v is None:
            return None
        return TT if v == pol else FF
    if isinstance(f, lt.Conj):
        return _junction3(lt.Conj, [expand_partial(g, values, table) for g in f.args])
    if isinstance(f, lt.Disj):
        return _junction3(lt.Disj, [expand_partial(g, values, table) for g in f.args])
    if isinstance(f, lt.Next):
        return f.arg
    if isinstance(f, (lt.Until, lt.WeakUntil)):
        left = expand_partial(f.left, values, table)
        stay = None if left is None else lt.t_and(left, f)
        return _junction3(lt.Disj, [expand_partial(f.right, values, table), stay])
    if isinstance(f, lt.Eventually):
        return _junction3(lt.Disj, [expand_partial(f.arg, values, table), f])
    if isinstance(f, lt.Globally):
        return _junction3(lt.Conj, [expand_partial(f.arg, values, table), f])
    raise ExpansionError(f"unexpected node in expansion: {f!r}")


def _junction3(cls, parts: list) -> Optional[LTL]:
    zero = FF if cls is lt.Conj else TT
    if any(p == zero for p in parts):
        return zero
    if any(p is None for p in parts):
        return None
    return lt.t_and_all(parts) if cls is lt.Conj else lt.t_or_all(parts)


def current_atoms(f: LTL) -> list:
    """Base predicates evaluated by expand in the current step (outside X), in first-occurrence order."""
    out, seen = [], set()

    def walk(g):
        if isinstance(g, lt.Next):
            return
        if isinstance(g, lt.Lit):
            b = _base(g.qf)
            if b.key not in seen:
                seen.add(b.key)
                out.append(b)
            return
        for c in lt.children(g):
            walk(c)

    walk(f)
    return out


# ---------------------------------------------------------------------------
# letter enumeration


def branch_ids(formulas: Iterable[LTL], table: PredicateTable) -> tuple:
    """Sorted predicate ids a state must branch on: current-step atoms plus propagation inputs."""
    ids = set()
    primed_vars = set()
    for f in formulas:
        for b in current_atoms(f):
            pid = table.add(b, "atom")
            ids.add(pid)
            for v in fm.free_vars(b):
                if is_primed(v):
                    primed_vars.add(unprimed(v))
    if primed_vars:
        linked = set(primed_vars)
        for pid in ids:
            vs = {unprimed(v) for v in fm.free_vars(table.preds[pid])}
            if any(is_primed(v) for v in fm.free_vars(table.preds[pid])):
                linked |= vs
        for p in table.propagation_targets():
            if {unprimed(v) for v in fm.free_vars(p)} & linked:
                ids.add(table.lookup(p)[0])
    return tuple(sorted(ids))


def relevant_letters(formulas: Iterable[LTL], table: PredicateTable, smt: SmtSession,
                     context: Formula = fm.TRUE, ids: Optional[tuple] = None) -> list:
    """All theory-consistent letters over the branch predicates, in canonical DFS order."""
    formulas = list(formulas)
    if ids is None:
        ids = branch_ids(formulas, table)
    out = []
    if smt.check_sat(context).is_unsat:
        return out

    def dfs(k: int, acc: dict, conj: Formula):
        if k == len(ids):
            out.append(Letter.of(acc))
            return
        pid = ids[k]
        p = table.preds[pid]
        for v in (True, False):
            c2 = fm.conj(conj, p if v else fm.negate(p))
            if c2 == fm.FALSE:
                continue
            verdict = smt.check_sat(c2)
            if verdict.is_unsat:
                continue
            acc[pid] = v
            dfs(k + 1, acc, c2)
            del acc[pid]

    dfs(0, {}, fm.canonicalize(context))
    return out


def _side_status(fs, values, table) -> str:
    """'false' if some member already expands to false, 'open' if undecided, else 'set'."""
    status = "set"
    for f in fs:
        e = expand_partial(f, values, table)
        if e == FF:
            return "false"
        if e is None:
            status = "open"
    return status


def state_letters(q: MonitorState, table: PredicateTable, smt: SmtSession) -> list:
    """Letters for a state as a decision tree over its branch predicates.

    Branching stops as soon as the successor no longer depends on the
    remaining predicates: the assumption side is already false, or it is
    settled and the guarantee side is already false.
    """
    ids = state_branch_ids(q, table)
    side_a, side_g = q.fa + q.ea, q.fg + q.eg
    out = []

    def decided(acc) -> bool:
        a = _side_status(side_a, acc, table)
        if a == "false":
            return True
        return a == "set" and _side_status(side_g, acc, table) == "false"

    def dfs(k: int, acc: dict, conj: Formula):
        if k == len(ids) or decided(acc):
            out.append(Letter.of(acc))
            return
        pid = ids[k]
        p = table.preds[pid]
        for v in (True, False):
            c2 = fm.conj(conj, p if v else fm.negate(p))
            if c2 == fm.FALSE or smt.check_sat(c2).is_unsat:
                continue
            acc[pid] = v
            dfs(k + 1, acc, c2)
            del acc[pid]

    dfs(0, {}, fm.TRUE)
    return out


# ---------------------------------------------------------------------------
# propagation and successors


def propagate(a: Letter, table: PredicateTable, smt: SmtSession) -> list:
    """Propagation predicates guaranteed to hold in the next step, as temporal literals."""
    premise = a.formula(table)
    pvars = {v for v in fm.free_vars(premise) if is_primed(v)}
    if not pvars:
        return []
    out = []
    for beta in table.propagation_targets():
        nxt = fm.prime(beta, table.inputs)
        if not fm.free_vars(nxt) <= pvars:
            continue
        if smt.entails(premise, nxt) is True:
            out.append(lt.lit(beta))
    return out


def next_state_raw(q: MonitorState, a: Letter, table: PredicateTable, smt: SmtSession) -> MonitorState:
    """Expand the four formula sets, add propagated facts to E_G, carry Imp over."""
    def side(f_set, e_set):
        """Expanded (F, E) of one side, or None when some member is already false."""
        f_out = [expand_partial(f, a.values, table) for f in f_set]
        e_out = [expand_partial(f, a.values, table) for f in e_set]
        if FF in f_out or FF in e_out:
            return None
        if None in f_out or None in e_out:
            raise ExpansionError("letter does not decide the current step")
        return tuple(f_out), tuple(e_out)

    sa = side(q.fa, q.ea)
    if sa is None:
        return make_state(fa=(FF,), imp_a=q.imp_a, imp_g=q.imp_g)
    sg = side(q.fg, q.eg)
    if sg is None:
        return make_state(fa=sa[0], ea=sa[1], fg=(FF,), imp_a=q.imp_a, imp_g=q.imp_g)
    return make_state(fa=sa[0], ea=sa[1], fg=sg[0], eg=sg[1] + tuple(propagate(a, table, smt)),
                      imp_a=q.imp_a, imp_g=q.imp_g)


def state_branch_ids(q: MonitorState, table: PredicateTable) -> tuple:
    return branch_ids(q.fa + q.ea + q.fg + q.eg, table)
