"""On-the-fly monitor construction, GF discharge and verdict labelling."""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

from . import formula as fm
from . import rpltl as lt
from .expansion import Letter, PredicateTable, next_state_raw, state_letters
from .rpltl import FF, LTL, TT
from .rules import Resources, RuleConfig, apply_rules, curr, imp_inv, non_nested, substitute_non_nested
from .smt import SmtSession, SolverConfig
from .state import ImpFormula, MonitorState, collapse_trivial, initial_state, make_state

log = logging.getLogger(__name__)

UNSAT, SAFETY, OPEN = "UNSAT", "SAFETY", "OPEN"
VERDICT_COLORS = {UNSAT: "red", SAFETY: "green", OPEN: "gray"}


class MonitorError(RuntimeError):
    pass


class StateCapExceeded(MonitorError):
    pass


@dataclass
class BuildConfig:
    max_states: int = 5000
    rules: RuleConfig = field(default_factory=RuleConfig)
    merge_equivalent: bool = True
    discharge_gf: bool = True
    apply_rules: bool = True  # off: plain expansion monitor, used as a baseline


@dataclass
class Monitor:
    states: list
    init: int
    table: PredicateTable
    transitions: dict  # state index -> [(Letter, successor index)]
    verdicts: dict = field(default_factory=dict)
    inputs: tuple = ()
    program_vars: tuple = ()
    stats: dict = field(default_factory=dict)

    def successors(self, i: int) -> list:
        return [j for _, j in self.transitions.get(i, [])]

    def step(self, i: int, env) -> int:
        """Successor of state i under a concrete valuation pair (keys x, i, x')."""
        for a, j in self.transitions[i]:
            if a.holds(self.table, env):
                return j
        raise MonitorError(f"no transition from state {i} for {env}")

    def reachable(self, start: int) -> set:
        seen, todo = {start}, [start]
        while todo:
            i = todo.pop()
            for j in self.successors(i):
                if j not in seen:
                    seen.add(j)
                    todo.append(j)
        return seen

    def verdict_counts(self) -> dict:
        out = {UNSAT: 0, SAFETY: 0, OPEN: 0}
        for v in self.verdicts.values():
            out[v] += 1
        return out


# ---------------------------------------------------------------------------
# propositional equivalence of states


def _opaque(f: LTL, props: dict) -> None:
    if isinstance(f, (lt.Conj, lt.Disj)):
        for a in f.args:
            _opaque(a, props)
    elif not isinstance(f, lt.Const):
        props.setdefault(f.key, f)


def _prop_eval(f: LTL, val: dict) -> bool:
    if isinstance(f, lt.Const):
        return f.value
    if isinstance(f, lt.Conj):
        return all(_prop_eval(a, val) for a in f.args)
    if isinstance(f, lt.Disj):
        return any(_prop_eval(a, val) for a in f.args)
    return val[f.key]


def propositionally_equivalent(f: LTL, g: LTL, limit: int = 12) -> bool:
    """Equivalence treating literals and temporal subformulas as independent propositions."""
    if f == g:
        return True
    props = {}
    _opaque(f, props)
    _opaque(g, props)
    if len(props) > limit:
        return False
    keys = sorted(props)
    for bits in product((False, True), repeat=len(keys)):
        val = dict(zip(keys, bits))
        if _prop_eval(f, val) != _prop_eval(g, val):
            return False
    return True


def _components(q: MonitorState) -> tuple:
    return tuple(lt.t_and_all(c) for c in (q.fa, q.ea, q.fg, q.eg))


def states_equivalent(p: MonitorState, q: MonitorState) -> bool:
    if p.key == q.key:
        return True
    if p.imp_a != q.imp_a or p.imp_g != q.imp_g:
        return False
    return all(propositionally_equivalent(a, b) for a, b in zip(_components(p), _components(q)))


def _bucket(q: MonitorState) -> tuple:
    return tuple(i.key for i in q.imp_a + q.imp_g)


# ---------------------------------------------------------------------------
# construction


def build(spec: lt.Spec, config: Optional[BuildConfig] = None, smt: Optional[SmtSession] = None,
          auditor=None, table: Optional[PredicateTable] = None) -> Monitor:
    """Explore states breadth-first from the initial state; successors are rule-simplified expansions."""
    config = config or BuildConfig()
    own = smt is None
    smt = smt or SmtSession(SolverConfig())
    try:
        return _build(spec, config, smt, auditor, table)
    finally:
        if own:
            smt.close()


def _build(spec, config, smt, auditor, table) -> Monitor:
    phi = spec.formula()
    table = table or PredicateTable.from_formulas([phi], spec.inputs)
    res = Resources(table, smt, config.rules, auditor=auditor)

    memo: dict = {}

    def simplify(q: MonitorState) -> MonitorState:
        # many letters lead to the same raw successor; simplify each one once
        out = memo.get(q.key)
        if out is None:
            out = collapse_trivial(apply_rules(q, res) if config.apply_rules else q)
            memo[q.key] = out
        return out

    q0 = simplify(partition_initial_state(spec))
    states = [q0]
    index = {q0.key: 0}
    buckets = {_bucket(q0): [0]}
    transitions = {}
    work = deque([0])
    merged = 0
    while work:
        i = work.popleft()
        q = states[i]
        out = []
        for a in state_letters(q, table, smt):
            nxt = simplify(next_state_raw(q, a, table, smt))
            j = index.get(nxt.key)
            if j is None and config.merge_equivalent:
                for k in buckets.get(_bucket(nxt), []):
                    if states_equivalent(states[k], nxt):
                        j = k
                        index[nxt.key] = k
                        merged += 1
                        break
            if j is None:
                if len(states) >= config.max_states:
                    raise StateCapExceeded(f"more than {config.max_states} monitor states")
                j = len(states)
                states.append(nxt)
                index[nxt.key] = j
                buckets.setdefault(_bucket(nxt), []).append(j)
                work.append(j)
            out.append((a, j))
        transitions[i] = out
    m = Monitor(states, 0, table, transitions,
                inputs=tuple(sorted(spec.inputs)), program_vars=tuple(sorted(spec.program_vars)))
    m.stats = {"states": len(states), "merged": merged,
               "transitions": sum(len(v) for v in transitions.values()),
               "rules": {str(k): v for k, v in sorted(res.counts.items())}}
    if config.discharge_gf and config.apply_rules:
        discharge_gf(m, res)
    label_verdicts(m)
    return m


def partition_initial_state(spec: lt.Spec) -> MonitorState:
    return initial_state(spec.assumption(), spec.guarantee())


# ---------------------------------------------------------------------------
# GF discharge


def gf_targets(q: MonitorState) -> list:
    out = {}
    for g in non_nested(q.fg):
        if isinstance(g, lt.Globally) and isinstance(g.arg, lt.Eventually) and lt.is_temporal_free(g.arg.arg):
            out.setdefault(g.key, g)
    return list(out.values())


def _af(m: Monitor, target: set) -> set:
    """States all of whose paths reach target."""
    good = set(target)
    changed = True
    while changed:
        changed = False
        for i in range(len(m.states)):
            if i not in good and m.successors(i) and all(j in good for j in m.successors(i)):
                good.add(i)
                changed = True
    return good


def _ag(m: Monitor, inside: set) -> set:
    """States all of whose paths stay inside."""
    keep = set(inside)
    changed = True
    while changed:
        changed = False
        for i in list(keep):
            if any(j not in keep for j in m.successors(i)):
                keep.discard(i)
                changed = True
    return keep


def discharge_gf(m: Monitor, res: Resources) -> Monitor:
    """Replace G F beta by true in states from which F beta is implied again and again."""
    targets = {}
    for q in m.states:
        for g in gf_targets(q):
            targets.setdefault(g.key, g)
    m.stats["gf_discharged"] = m.stats["gf_discharged_states"] = 0
    if not targets:
        return m
    triv = {i for i, q in enumerate(m.states) if q.formula() in (TT, FF)}
    discharged, rewritten = 0, 0
    for key in sorted(targets):
        gf = targets[key]
        beta = lt.to_qf(gf.arg.arg)
        hit = set()
        for i, q in enumerate(m.states):
            ctx = fm.conj(curr(q, "G"), imp_inv(q, "G"))
            # G (beta -> F beta) is valid, so beta holding now counts as an implied F beta
            if res.entails(ctx, beta) or any(imp.kind == "F" and imp.alpha == beta and res.entails(ctx, imp.gamma)
                                             for imp in q.imp_g):
                hit.add(i)
        a_gf = _ag(m, _af(m, hit | triv))
        before = rewritten
        for i in sorted(a_gf):
            q = m.states[i]
            if gf not in set(non_nested(q.fg)):
                continue
            q2 = q.replace("G", f=substitute_non_nested(q.fg, gf, TT))
            m.states[i] = collapse_trivial(apply_rules(q2, res))
            rewritten += 1
        discharged += rewritten > before
    m.stats["gf_discharged"] = discharged
    m.stats["gf_discharged_states"] = rewritten
    return m


# ---------------------------------------------------------------------------
# verdicts


def label_verdicts(m: Monitor) -> Monitor:
    n = len(m.states)
    unsafe = {i for i, q in enumerate(m.states) if not lt.is_syntactic_safety(q.formula())}
    # states that can reach a non-safety state
    preds = {i: [] for i in range(n)}
    for i in range(n):
        for j in m.successors(i):
            preds[j].append(i)
    can_reach = set(unsafe)
    todo = list(unsafe)
    while todo:
        j = todo.pop()
        for i in preds[j]:
            if i not in can_reach:
                can_reach.add(i)
                todo.append(i)
    verdicts = {}
    for i, q in enumerate(m.states):
        if q.formula() == FF:
            verdicts[i] = UNSAT
        elif i not in can_reach:
            verdicts[i] = SAFETY
        else:
            verdicts[i] = OPEN
    m.verdicts = verdicts
    check_monotone(m)
    return m


def check_monotone(m: Monitor) -> None:
    for i, out in m.transitions.items():
        for a, j in out:
            if m.verdicts[i] == UNSAT and m.verdicts[j] != UNSAT:
                raise MonitorError(f"UNSAT state {i} has non-UNSAT successor {j}")
            if m.verdicts[i] == SAFETY and m.verdicts[j] == OPEN:
                raise MonitorError(f"SAFETY state {i} has OPEN successor {j}")


# ---------------------------------------------------------------------------
# export / import


def letter_text(m: Monitor, a: Letter) -> str:
    if not a.assignment:
        return "true"
    return " && ".join(fm.pretty(m.table.preds[i]) if v else "!(" + fm.pretty(m.table.preds[i]) + ")"
                       for i, v in a.assignment)


def to_json(m: Monitor) -> dict:
    states = []
    for i, q in enumerate(m.states):
        d = {"id": i, "verdict": m.verdicts.get(i, OPEN), "formula_text": lt.to_text(q.formula())}
        d.update(q.to_dict())
        d["imp_records"] = {
            side: [{"gamma": fm.pretty(r.gamma), "kind": r.kind, "alpha": fm.pretty(r.alpha)} for r in imps]
            for side, imps in (("A", q.imp_a), ("G", q.imp_g))
        }
        states.append(d)
    return {
        "inputs": list(m.inputs),
        "program_vars": list(m.program_vars),
        "predicates": [fm.pretty(p) for p in m.table.preds],
        "predicate_kinds": list(m.table.kinds),
        "states": states,
        "init": m.init,
        "transitions": [{"from": i, "letter": a.to_json(), "to": j}
                        for i in sorted(m.transitions) for a, j in m.transitions[i]],
        "stats": m.stats,
    }


def export(m: Monitor, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(to_json(m), indent=2, sort_keys=False) + "\n"
    if fmt == "dot":
        return to_dot(m)
    raise ValueError(f"unknown monitor format {fmt!r}")


def to_dot(m: Monitor) -> str:
    lines = ["digraph monitor {", "  rankdir=LR;", '  node [shape=box, style=filled, fontname="monospace"];',
             '  __init [shape=point, style=""];', f"  __init -> q{m.init};"]
    for i, q in enumerate(m.states):
        v = m.verdicts.get(i, OPEN)
        label = f"{i}: {v}\\n" + _dot_escape(lt.to_text(q.formula()))
        lines.append(f'  q{i} [label="{label}", fillcolor={VERDICT_COLORS[v]}];')
    for i in sorted(m.transitions):
        for a, j in m.transitions[i]:
            lines.append(f'  q{i} -> q{j} [label="{_dot_escape(letter_text(m, a))}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def from_json(data) -> Monitor:
    """Rebuild a monitor from its JSON export."""
    if isinstance(data, str):
        data = json.loads(data)
    inputs, pvars = data["inputs"], data["program_vars"]

    def qf(s):
        return lt.parse_qf(s, inputs, pvars)

    def ltl(s):
        return lt.nnf(lt.parse_formula(s, inputs, pvars))

    table = PredicateTable(inputs=frozenset(inputs))
    kinds = data.get("predicate_kinds", ["atom"] * len(data["predicates"]))
    for pos, (p, k) in enumerate(zip(data["predicates"], kinds)):
        pid = table.add(qf(p), k)
        if pid != pos:
            raise MonitorError(f"duplicate predicate {p!r} in export")
        if k == "prop":
            table.prop_preds.append(table.preds[pid])
        elif k == "gen":
            table.gen_preds.append(table.preds[pid])
    states = []
    for s in data["states"]:
        recs = s["imp_records"]
        imps = {side: tuple(ImpFormula(qf(r["gamma"]), r["kind"], qf(r["alpha"])) for r in recs[side])
                for side in ("A", "G")}
        states.append(make_state(
            fa=tuple(ltl(t) for t in s["F_A"]), ea=tuple(ltl(t) for t in s["E_A"]),
            fg=tuple(ltl(t) for t in s["F_G"]), eg=tuple(ltl(t) for t in s["E_G"]),
            imp_a=imps["A"], imp_g=imps["G"]))
    transitions = {i: [] for i in range(len(states))}
    for t in data["transitions"]:
        d = {i: True for i in t["letter"]["true"]}
        d.update({i: False for i in t["letter"]["false"]})
        transitions[t["from"]].append((Letter.of(d), t["to"]))
    verdicts = {s["id"]: s["verdict"] for s in data["states"]}
    return Monitor(states, data["init"], table, transitions, verdicts,
                   tuple(inputs), tuple(pvars), dict(data.get("stats", {})))
