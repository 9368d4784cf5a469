"""State transformation rules and the schedule that applies them.

Each rule takes a monitor state and returns a transformed state, or ``None``
when its premises do not definitely hold.  All first-order premises go
through the SMT session; anything short of a definite answer means "does not
apply", which keeps every transformation sound.

Implied formulas of the shape ``G(gamma -> alpha)`` (first-order alpha) are
stored with gamma folded into alpha, so the first-order part of an Imp set is
always a plain conjunction of invariants.  Rules that need the antecedent back
split such an invariant at one of its disjuncts.
"""

from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from . import formula as fm
from . import rpltl as lt
from .expansion import PredicateTable
from .fixpoint import FixpointBudget, check_inductive, chc_invariant, reach_entails, reachable_set
from .formula import Formula, is_primed
from .rpltl import FF, LTL, TT
from .smt import SmtSession, SolverError
from .state import ImpFormula, MonitorState, initial_state, now

log = logging.getLogger(__name__)

SIDES = ("A", "G")


class RuleId(str, enum.Enum):
    NEXT_EXT = "NextExt"
    UNSAT = "Unsat"
    UNSAT_F = "UnsatF"
    SUBST_TRUE = "SubstTrue"
    SUBST_FALSE = "SubstFalse"
    SIMPLIFY_IMPL = "SimplifyImpl"
    SIMPLIFY_AND = "SimplifyAnd"
    SIMPLIFY_NON_NESTED = "SimplifyNonNested"
    PROPAGATE_ASSUMP = "PropagateAssump"
    PROPAGATE_G = "PropagateG"
    PROPAGATE_W = "PropagateW"
    JOIN_IMP = "JoinImp"
    CHAIN_IMP = "ChainImp"
    CHAIN_IMP_G = "ChainImpG"
    CHAIN_IMP_F = "ChainImpF"
    CHAIN_IMP_X = "ChainImpX"
    GEN_INV = "GenInv"
    GEN_INV_P = "GenInvP"
    GEN_REACH = "GenReach"

    def __str__(self):
        return self.value


PROPAGATION_RULES = frozenset({RuleId.PROPAGATE_ASSUMP, RuleId.PROPAGATE_G})


@dataclass
class RuleConfig:
    gen_inv_p: bool = False
    next_ext: bool = False
    chc_command: Optional[str] = None
    disabled: frozenset = frozenset()
    saturation_rounds: int = 3
    simplify_rounds: int = 3
    max_imp: int = 64
    gf_reach: bool = False  # let GenReach target G F beta directly
    max_split: int = 3  # disjuncts considered when splitting an invariant into antecedent and consequent
    budget: FixpointBudget = field(default_factory=FixpointBudget)

    def enabled(self, r: RuleId) -> bool:
        if r in self.disabled:
            return False
        if r is RuleId.GEN_INV_P:
            return self.gen_inv_p
        if r is RuleId.NEXT_EXT:
            return self.next_ext
        return True


Auditor = Callable[[RuleId, MonitorState, MonitorState], None]


@dataclass
class Resources:
    table: PredicateTable
    smt: SmtSession
    config: RuleConfig = field(default_factory=RuleConfig)
    auditor: Optional[Auditor] = None
    geninvp_seen: set = field(default_factory=set)
    trace: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    memo: dict = field(default_factory=dict)

    def reachable(self, gamma: Formula, inv: Formula) -> Optional[Formula]:
        k = ("reach", gamma.key, inv.key)
        if k not in self.memo:
            self.memo[k] = reachable_set(gamma, inv, self.smt, self.inputs, self.config.budget)
        return self.memo[k]

    def reaches(self, gamma: Formula, beta: Formula, inv: Formula) -> Optional[bool]:
        k = ("reach-all", gamma.key, beta.key, inv.key)
        if k not in self.memo:
            self.memo[k] = reach_entails(gamma, beta, inv, self.smt, self.inputs, self.config.budget)
        return self.memo[k]

    @property
    def inputs(self) -> frozenset:
        return self.table.inputs

    def entails(self, a: Formula, b: Formula) -> bool:
        try:
            return self.smt.entails(a, b) is True
        except SolverError as e:
            log.warning("solver failure treated as unknown: %s", e)
            return False

    def unsat(self, f: Formula) -> bool:
        try:
            return self.smt.check_sat(f).is_unsat
        except SolverError as e:
            log.warning("solver failure treated as unknown: %s", e)
            return False


# ---------------------------------------------------------------------------
# derived first-order views


def curr(q: MonitorState, d: str) -> Formula:
    """First-order members of E_A, plus those of E_G on the guarantee side."""
    members = q.ea if d == "A" else q.eg + q.ea
    return fm.conj_all(lt.to_qf(f) for f in members if lt.is_temporal_free(f))


def imp_inv(q: MonitorState, d: str) -> Formula:
    return fm.conj_all(i.alpha for i in q.imp(d) if i.kind == "now" and i.unconditional)


def over_state_vars(f: Formula, inputs) -> bool:
    """f mentions only unprimed program variables."""
    return all(not is_primed(v) and v not in inputs for v in fm.free_vars(f))


def _disjuncts(f: Formula) -> tuple:
    return f.args if isinstance(f, fm.Or) else (f,)


def _conjuncts(f: Formula) -> tuple:
    return f.args if isinstance(f, fm.And) else (f,)


def splits(i: ImpFormula, limit: int) -> list:
    """(antecedent, consequent) readings of an invariant: for c1 | ... | cn, (!c_j for j != k) -> c_k."""
    ds = _disjuncts(i.alpha)
    if len(ds) < 2 or len(ds) > limit:
        return []
    out = []
    for k, dk in enumerate(ds):
        g = fm.conj_all(fm.negate(dj) for j, dj in enumerate(ds) if j != k)
        out.append((g, dk))
    return out


# ---------------------------------------------------------------------------
# substitution


def _rebuild(f: LTL, kids: list) -> LTL:
    if isinstance(f, lt.Conj):
        return lt.t_and_all(kids)
    if isinstance(f, lt.Disj):
        return lt.t_or_all(kids)
    if isinstance(f, lt.Next):
        return lt.t_next(kids[0])
    if isinstance(f, lt.Eventually):
        return lt.t_eventually(kids[0])
    if isinstance(f, lt.Globally):
        return lt.t_globally(kids[0])
    if isinstance(f, lt.Until):
        return lt.t_until(*kids)
    if isinstance(f, lt.WeakUntil):
        return lt.t_weak(*kids)
    if isinstance(f, lt.Neg):
        return lt.negation(kids[0])
    if isinstance(f, lt.Imp):
        return lt.t_or(lt.negation(kids[0]), kids[1])
    return f


def replace(f: LTL, pat: LTL, val: LTL, nested: bool = True) -> LTL:
    """Replace occurrences of pat by val.

    A junction pattern also matches inside a larger junction of the same kind
    (``a | b`` occurs in ``a | b | F c``).  With ``nested=False`` the scan
    does not descend below temporal operators.
    """
    if f == pat:
        return val
    if isinstance(f, lt.Lit) or isinstance(f, lt.Const):
        return f
    if isinstance(f, lt.TEMPORAL) and not nested:
        return f
    kids = list(lt.children(f))
    if isinstance(pat, type(f)) and isinstance(f, (lt.Conj, lt.Disj)):
        inner = set(pat.args)
        if inner < set(kids):
            rest = [replace(k, pat, val, nested) for k in kids if k not in inner]
            return _rebuild(f, rest + [val])
    return _rebuild(f, [replace(k, pat, val, nested) for k in kids])


def substitute_everywhere(fs: Iterable[LTL], pat: LTL, val: LTL) -> tuple:
    return tuple(replace(f, pat, val, True) for f in fs)


def substitute_non_nested(fs: Iterable[LTL], pat: LTL, val: LTL) -> tuple:
    return tuple(replace(f, pat, val, False) for f in fs)


def qf_candidates(fs: Iterable[LTL]) -> list:
    """First-order subformulas of fs: maximal temporal-free subtrees, their literals,
    and the first-order part of mixed junctions; canonical order, largest first."""
    found = {}

    def add(g):
        if not isinstance(g, lt.Const):
            found.setdefault(g.key, g)

    def walk(g):
        if isinstance(g, lt.Const):
            return
        if lt.is_temporal_free(g):
            add(g)
            for l in lt.literals(g):
                add(l)
            return
        if isinstance(g, (lt.Conj, lt.Disj)):
            qf = [a for a in g.args if lt.is_temporal_free(a)]
            if len(qf) >= 2:
                add(lt.t_and_all(qf) if isinstance(g, lt.Conj) else lt.t_or_all(qf))
        for c in lt.children(g):
            walk(c)

    for f in fs:
        walk(f)
    return sorted(found.values(), key=lambda g: (-len(g.key), g.key))


def non_nested(fs: Iterable[LTL]):
    """Subformulas not below a temporal operator (temporal nodes themselves included)."""
    for f in fs:
        stack = [f]
        while stack:
            g = stack.pop()
            yield g
            if not isinstance(g, lt.TEMPORAL):
                stack.extend(reversed(lt.children(g)))


def _qf_of(f: LTL) -> Optional[Formula]:
    return lt.to_qf(f) if lt.is_temporal_free(f) else None


# ---------------------------------------------------------------------------
# individual rules


def _side_dead(q: MonitorState, d: str) -> bool:
    return q.assumption_false if d == "A" else q.guarantee_false


def _add_imps(q: MonitorState, d: str, new: Iterable[ImpFormula]) -> Optional[MonitorState]:
    have = {i.key for i in q.imp(d)}
    fresh = [i for i in new if not i.trivial and i.key not in have]
    if not fresh:
        return None
    return q.replace(d, imp=q.imp(d) + tuple(fresh))


def _kill(q: MonitorState, d: str) -> MonitorState:
    return q.replace(d, f=(FF,), e=(FF,))


def rule_unsat(q, d, res: Resources):
    if _side_dead(q, d):
        return None
    if res.unsat(fm.conj(curr(q, d), imp_inv(q, d))):
        return _kill(q, d)
    return None


def rule_unsat_f(q, d, res: Resources):
    if _side_dead(q, d):
        return None
    inv, c = imp_inv(q, d), curr(q, d)
    for i in q.imp(d):
        if i.kind == "F" and res.entails(c, i.gamma) and res.unsat(fm.conj(i.alpha, inv)):
            return _kill(q, d)
    return None


def _subst(q, d, res: Resources, value: bool):
    if _side_dead(q, d) or not q.f(d):
        return None
    inv = imp_inv(q, d)
    if inv == fm.TRUE:
        return None
    fs = q.f(d)
    changed = False
    for g in qf_candidates(fs):
        qf = lt.to_qf(g)
        goal = qf if value else fm.negate(qf)
        if res.entails(inv, goal):
            new = substitute_everywhere(fs, g, TT if value else FF)
            if new != fs:
                fs, changed = new, True
    return q.replace(d, f=fs) if changed else None


def rule_subst_true(q, d, res):
    return _subst(q, d, res, True)


def rule_subst_false(q, d, res):
    return _subst(q, d, res, False)


def _imp_pattern(i: ImpFormula) -> LTL:
    return lt.t_or(lt.lit(fm.negate(i.gamma)), i.consequent())


def _apply_patterns(q, d, pairs) -> Optional[MonitorState]:
    fs = q.f(d)
    for pat, val, nested in pairs:
        if pat in (TT, FF):
            continue
        fs = tuple(replace(f, pat, val, nested) for f in fs)
    return q.replace(d, f=fs) if fs != q.f(d) else None


def rule_simplify_impl(q, d, res):
    if _side_dead(q, d) or not q.f(d):
        return None
    return _apply_patterns(q, d, [(_imp_pattern(i), TT, True) for i in q.imp(d)])


def rule_simplify_and(q, d, res):
    if _side_dead(q, d) or not q.f(d):
        return None
    pairs = []
    for i in q.imp(d):
        if i.unconditional:
            continue
        g = lt.lit(i.gamma)
        pairs.append((lt.t_and(g, i.consequent()), g, True))
    return _apply_patterns(q, d, pairs)


def rule_simplify_non_nested(q, d, res: Resources):
    if _side_dead(q, d) or not q.f(d):
        return None
    ctx = fm.conj(curr(q, d), imp_inv(q, d))
    pairs = []
    for i in q.imp(d):
        if res.entails(ctx, i.gamma):
            pairs.append((i.consequent(), TT, False))
    return _apply_patterns(q, d, pairs)


def rule_propagate_assump(q, d, res):
    if d != "G":
        return None
    return _add_imps(q, "G", q.imp_a)


def _imps_from_globally(psi: LTL) -> list:
    out = []
    parts = psi.args if isinstance(psi, lt.Conj) else (psi,)
    for c in parts:
        qf = _qf_of(c)
        if qf is not None:
            out.append(now(qf))
            continue
        shaped = _temporal_shape(c)
        if shaped is not None:
            out.append(ImpFormula(fm.TRUE, *shaped))
            continue
        if isinstance(c, lt.Disj):
            temporal = [a for a in c.args if not lt.is_temporal_free(a)]
            if len(temporal) == 1:
                shaped = _temporal_shape(temporal[0])
                if shaped is not None:
                    rest = fm.disj_all(lt.to_qf(a) for a in c.args if a is not temporal[0])
                    out.append(ImpFormula(fm.negate(rest), *shaped))
    return out


def _temporal_shape(f: LTL) -> Optional[tuple]:
    """(kind, alpha) when f is X/F/G of a first-order formula."""
    for cls, kind in ((lt.Next, "X"), (lt.Eventually, "F"), (lt.Globally, "G")):
        if isinstance(f, cls):
            qf = _qf_of(f.arg)
            if qf is not None:
                return kind, qf
    return None


def rule_propagate_g(q, d, res):
    if _side_dead(q, d):
        return None
    new = []
    for f in q.e(d):
        if isinstance(f, lt.Globally):
            new.extend(_imps_from_globally(f.arg))
    return _add_imps(q, d, new)


def _weak_pairs(q, d) -> list:
    out = []
    for f in q.e(d):
        if isinstance(f, lt.WeakUntil):
            a, b = _qf_of(f.left), _qf_of(f.right)
            if a is not None and b is not None:
                out.append((a, b))
        elif isinstance(f, lt.Globally):
            a = _qf_of(f.arg)
            if a is not None:
                out.append((a, fm.FALSE))
    return out


def rule_propagate_w(q, d, res: Resources):
    if _side_dead(q, d):
        return None
    inv = imp_inv(q, d)
    ws = _weak_pairs(q, d)
    have = {i.alpha.key for i in q.imp(d) if i.kind == "now"}
    for (a1, b1), (a2, b2) in itertools.combinations(ws, 2):
        if b1 == fm.FALSE and b2 == fm.FALSE:
            continue  # two plain invariants: nothing to gain
        target = fm.conj(a1, a2)
        if target.key in have:
            continue
        if (res.unsat(fm.conj_all([a1, b2, inv])) and res.unsat(fm.conj_all([a2, b1, inv]))
                and res.unsat(fm.conj_all([b1, b2, inv]))):
            return _add_imps(q, d, [now(target)])
    return None


def _room(q, d, res) -> bool:
    return len(q.imp(d)) < res.config.max_imp


def rule_chain_imp(q, d, res: Resources):
    if _side_dead(q, d) or not _room(q, d, res):
        return None
    inv = imp_inv(q, d)
    targets = [t for t in q.imp(d) if t.kind != "now" and not t.unconditional]
    if not targets:
        return None
    new = []
    for n in q.imp(d):
        if n.kind != "now":
            continue
        for g, g1 in splits(n, res.config.max_split):
            for t in targets:
                if g == t.gamma:
                    continue
                if res.entails(fm.conj(g1, inv), t.gamma):
                    new.append(ImpFormula(g, t.kind, t.alpha))
    # the unsplit invariant itself: its alpha holds always, so gamma2 only needs inv
    for t in targets:
        if res.entails(inv, t.gamma):
            new.append(ImpFormula(fm.TRUE, t.kind, t.alpha))
    return _add_imps(q, d, new)


def rule_chain_imp_g(q, d, res: Resources):
    if _side_dead(q, d):
        return None
    ctx = fm.conj(curr(q, d), imp_inv(q, d))
    new = [now(i.alpha) for i in q.imp(d) if i.kind == "G" and res.entails(ctx, i.gamma)]
    return _add_imps(q, d, new)


def _chain_forward(q, d, res: Resources, kind: str):
    if _side_dead(q, d) or not _room(q, d, res):
        return None
    inv = imp_inv(q, d)
    sources = [i for i in q.imp(d) if i.kind == kind]
    if not sources:
        return None
    readings = []  # (gamma1, kind of phi, phi)
    for n in q.imp(d):
        if n.kind == "now":
            readings.extend((g1, "now", phi) for g1, phi in splits(n, res.config.max_split))
        elif kind == "F" and n.kind == "F":
            readings.append((n.gamma, "F", n.alpha))
    new = []
    for s in sources:
        for g1, _, phi in readings:
            if g1 == fm.TRUE or phi == s.alpha:
                continue
            if res.entails(fm.conj(s.alpha, inv), g1):
                new.append(ImpFormula(s.gamma, kind, phi))
    return _add_imps(q, d, new)


def rule_chain_imp_f(q, d, res):
    return _chain_forward(q, d, res, "F")


def rule_chain_imp_x(q, d, res):
    return _chain_forward(q, d, res, "X")


def rule_join_imp(q, d, res: Resources):
    if _side_dead(q, d) or not _room(q, d, res):
        return None
    ctx = fm.conj(curr(q, d), imp_inv(q, d))
    groups = {}
    for i in q.imp(d):
        if i.kind != "now" and not i.unconditional:
            groups.setdefault((i.kind, i.alpha.key), []).append(i)
    new = []
    for members in groups.values():
        for i1, i2 in itertools.combinations(members, 2):
            g = fm.disj(i1.gamma, i2.gamma)
            if (res.entails(ctx, g) and not res.entails(ctx, i1.gamma)
                    and not res.entails(ctx, i2.gamma)):
                new.append(ImpFormula(g, i1.kind, i1.alpha))
    return _add_imps(q, d, new)


def rule_next_ext(q, d, res: Resources):
    """alpha' at the top of F_D gains the equivalent X alpha (program variables only)."""
    if _side_dead(q, d):
        return None
    extra = []
    for f in q.f(d) + q.e(d):
        if isinstance(f, lt.Lit):
            vs = fm.free_vars(f.qf)
            if vs and all(is_primed(v) for v in vs):
                nxt = lt.t_next(lt.lit(fm.unprime(f.qf)))
                if nxt not in q.f(d):
                    extra.append(nxt)
    if not extra:
        return None
    return q.replace(d, f=q.f(d) + tuple(extra))


# generation rules ----------------------------------------------------------


def liveness_targets(q, d, inputs, recurrence: bool = False) -> tuple:
    """(F/W end conditions for GenInv, reach targets for GenReach), state-variable formulas only.

    With ``recurrence`` the beta of G F beta is a reach target too; otherwise
    such obligations are left to the graph-level discharge pass.
    """
    inv_targets, reach_targets = {}, {}
    for g in non_nested(q.f(d)):
        if isinstance(g, lt.Eventually):
            b = _qf_of(g.arg)
            if b is not None and over_state_vars(b, inputs):
                inv_targets.setdefault(b.key, b)
                reach_targets.setdefault(b.key, b)
        elif isinstance(g, (lt.WeakUntil, lt.Until)):
            b = _qf_of(g.right)
            if b is not None and over_state_vars(b, inputs):
                inv_targets.setdefault(b.key, b)
        elif isinstance(g, lt.Globally):
            a = _qf_of(g.arg)
            if a is not None and over_state_vars(a, inputs):
                nb = fm.negate(a)
                reach_targets.setdefault(nb.key, nb)
            elif recurrence and isinstance(g.arg, lt.Eventually):
                b = _qf_of(g.arg.arg)
                if b is not None and over_state_vars(b, inputs):
                    reach_targets.setdefault(b.key, b)
    return list(inv_targets.values()), list(reach_targets.values())


def _strengthenings(alpha, gamma, inv, res: Resources):
    yield alpha
    preds = [p for p in res.table.propagation_targets()
             if over_state_vars(p, res.inputs) and res.entails(gamma, p)]
    for n in (1, 2):
        for combo in itertools.combinations(preds, n):
            yield fm.conj_all((alpha,) + combo)
    r = res.reachable(gamma, inv)
    if r is not None:
        yield fm.conj(alpha, r)
    if res.config.chc_command:
        t = chc_invariant(gamma, alpha, inv, res.inputs, res.config.chc_command)
        if t is not None:
            yield t


def rule_gen_inv(q, d, res: Resources):
    if _side_dead(q, d) or not _room(q, d, res):
        return None
    gamma = curr(q, d)
    inv = imp_inv(q, d)
    targets, _ = liveness_targets(q, d, res.inputs)
    have = {i.key for i in q.imp(d)}
    for beta in targets:
        alpha = fm.negate(beta)
        cand = ImpFormula(gamma, "G", alpha)
        if cand.key in have or res.unsat(fm.conj(gamma, inv)):
            continue
        tried = set()
        for theta in _strengthenings(alpha, gamma, inv, res):
            if theta.key in tried:
                continue
            tried.add(theta.key)
            if check_inductive(theta, gamma, alpha, inv, res.smt, res.inputs):
                log.debug("invariant %s via %s", fm.pretty(alpha), fm.pretty(theta))
                return _add_imps(q, d, [cand])
    return None


def _project(f: Formula, inputs) -> Formula:
    return fm.conj_all(c for c in _conjuncts(f) if over_state_vars(c, inputs))


def rule_gen_reach(q, d, res: Resources):
    if _side_dead(q, d) or not _room(q, d, res):
        return None
    inv = imp_inv(q, d)
    ctx = fm.conj(curr(q, d), inv)
    g0 = _project(curr(q, d), res.inputs)
    gammas = [g0] if g0 == fm.TRUE else [g0, fm.TRUE]
    _, targets = liveness_targets(q, d, res.inputs, res.config.gf_reach)
    for beta in targets:
        known = [i for i in q.imp(d) if i.kind == "F" and i.alpha == beta]
        if any(res.entails(ctx, i.gamma) for i in known):
            continue
        for g in gammas:
            if res.reaches(g, beta, inv) is True:
                return _add_imps(q, d, [ImpFormula(g, "F", beta)])
    return None


def rule_gen_inv_p(q, d, res: Resources):
    if _side_dead(q, d):
        return None
    seen_key = (d, tuple(f.key for f in q.e(d)))
    if seen_key in res.geninvp_seen:
        return None
    res.geninvp_seen.add(seen_key)
    gamma = curr(q, d)
    alpha = res.reachable(gamma, imp_inv(q, d))
    if alpha is None or alpha in (fm.TRUE, fm.FALSE):
        return None
    out = _add_imps(q, d, [ImpFormula(gamma, "G", alpha)])
    if out is not None:
        res.table.add_gen_pred(alpha)
    return out


RULES = {
    RuleId.NEXT_EXT: rule_next_ext,
    RuleId.UNSAT: rule_unsat,
    RuleId.UNSAT_F: rule_unsat_f,
    RuleId.SUBST_TRUE: rule_subst_true,
    RuleId.SUBST_FALSE: rule_subst_false,
    RuleId.SIMPLIFY_IMPL: rule_simplify_impl,
    RuleId.SIMPLIFY_AND: rule_simplify_and,
    RuleId.SIMPLIFY_NON_NESTED: rule_simplify_non_nested,
    RuleId.PROPAGATE_ASSUMP: rule_propagate_assump,
    RuleId.PROPAGATE_G: rule_propagate_g,
    RuleId.PROPAGATE_W: rule_propagate_w,
    RuleId.JOIN_IMP: rule_join_imp,
    RuleId.CHAIN_IMP: rule_chain_imp,
    RuleId.CHAIN_IMP_G: rule_chain_imp_g,
    RuleId.CHAIN_IMP_F: rule_chain_imp_f,
    RuleId.CHAIN_IMP_X: rule_chain_imp_x,
    RuleId.GEN_INV: rule_gen_inv,
    RuleId.GEN_INV_P: rule_gen_inv_p,
    RuleId.GEN_REACH: rule_gen_reach,
}


def try_rule(r: RuleId, q: MonitorState, res: Resources, side: Optional[str] = None) -> Optional[MonitorState]:
    """One application of r (on the given side, or the first side where it applies)."""
    fn = RULES[r]
    for d in (side,) if side else SIDES:
        try:
            out = fn(q, d, res)
        except SolverError as e:
            log.warning("%s skipped: %s", r, e)
            out = None
        if out is not None and out != q:
            return out
    return None


# ---------------------------------------------------------------------------
# schedule

STEP1 = (RuleId.UNSAT_F, RuleId.UNSAT)
STEP2 = (RuleId.CHAIN_IMP, RuleId.CHAIN_IMP_G, RuleId.CHAIN_IMP_F, RuleId.CHAIN_IMP_X,
         RuleId.JOIN_IMP, RuleId.PROPAGATE_W)
# non-nested first: a top-level obligation implied by the context is dropped
# outright, leaving the pattern rules for occurrences under temporal operators
STEP3 = (RuleId.SUBST_TRUE, RuleId.SUBST_FALSE, RuleId.SIMPLIFY_NON_NESTED, RuleId.SIMPLIFY_IMPL,
         RuleId.SIMPLIFY_AND)
STEP4 = (RuleId.GEN_INV, RuleId.GEN_REACH, RuleId.GEN_INV_P)


class _Run:
    def __init__(self, q: MonitorState, res: Resources):
        self.q = q
        self.res = res

    def fire(self, r: RuleId, d: str) -> bool:
        if not self.res.config.enabled(r):
            return False
        before = self.q
        try:
            out = RULES[r](before, d, self.res)
        except SolverError as e:
            log.warning("%s skipped: %s", r, e)
            return False
        if out is None or out == before:
            return False
        self.q = out
        self.res.trace.append(r)
        self.res.counts[r] = self.res.counts.get(r, 0) + 1
        if self.res.auditor is not None:
            self.res.auditor(r, before, out)
        if r not in PROPAGATION_RULES and (out.ea != before.ea or out.eg != before.eg
                                           or out.imp_a != before.imp_a or out.imp_g != before.imp_g):
            self.propagate()
        return True

    def propagate(self):
        for _ in range(8):
            moved = False
            for d in SIDES:
                moved |= self.fire(RuleId.PROPAGATE_G, d)
            moved |= self.fire(RuleId.PROPAGATE_ASSUMP, "G")
            if not moved:
                return

    def sweep(self, rules) -> bool:
        changed = False
        for r in rules:
            for d in SIDES:
                changed |= self.fire(r, d)
        return changed

    def simplify(self):
        for _ in range(self.res.config.simplify_rounds):
            changed = self.sweep(STEP1)
            for _ in range(self.res.config.saturation_rounds):
                if not self.sweep(STEP2):
                    break
                changed = True
            changed |= self.sweep(STEP3)
            if not changed:
                return


def apply_rules(q: MonitorState, res: Resources) -> MonitorState:
    """Propagation, then simplification, generation, and simplification again."""
    run = _Run(q, res)
    run.sweep((RuleId.NEXT_EXT,))
    run.propagate()
    run.simplify()
    if run.sweep(STEP4):
        run.simplify()
    return run.q


def apply_rules_traced(q: MonitorState, res: Resources) -> tuple:
    """apply_rules plus the list of rules that changed the state, in order."""
    start = len(res.trace)
    out = apply_rules(q, res)
    return out, [str(r) for r in res.trace[start:]]


def partition_initial(spec: lt.Spec) -> MonitorState:
    """Initial state: first-order and safety G/W conjuncts go to E, the rest to F."""
    return initial_state(spec.assumption(), spec.guarantee())
