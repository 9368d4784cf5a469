"""Parity automata from HOA text, symbolic game structures and the game-monitor product.

Colors follow the max-even convention throughout: a sequence of locations is
accepted when the largest color seen infinitely often is even.
"""

from __future__ import annotations

import itertools
import json
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from . import formula as fm
from .formula import Formula, is_primed, unprimed
from .smt import SexpError, SmtSession, parse_sexps, sexp_to_formula

UNSAT, SAFETY, OPEN = "UNSAT", "SAFETY", "OPEN"
MAX_GUARD_APS = 16  # truth-table limit for determinism and totality checks
MAX_ACC_SETS = 12


class HoaError(ValueError):
    pass


class GameError(ValueError):
    pass


# ---------------------------------------------------------------------------
# boolean guards over atomic propositions
#
# ('t',) ('f',) ('ap', i) ('not', g) ('and', (g, ...)) ('or', (g, ...))

TRUE_GUARD = ("t",)
FALSE_GUARD = ("f",)


def guard_eval(g: tuple, val: Sequence[bool]) -> bool:
    tag = g[0]
    if tag == "t":
        return True
    if tag == "f":
        return False
    if tag == "ap":
        return bool(val[g[1]])
    if tag == "not":
        return not guard_eval(g[1], val)
    if tag == "and":
        return all(guard_eval(h, val) for h in g[1])
    return any(guard_eval(h, val) for h in g[1])


def guard_aps(g: tuple) -> set:
    if g[0] == "ap":
        return {g[1]}
    if g[0] == "not":
        return guard_aps(g[1])
    if g[0] in ("and", "or"):
        return set().union(*(guard_aps(h) for h in g[1]))
    return set()


def guard_text(g: tuple, names: Optional[Sequence[str]] = None) -> str:
    tag = g[0]
    if tag in ("t", "f"):
        return tag
    if tag == "ap":
        return names[g[1]] if names else str(g[1])
    if tag == "not":
        return "!" + _guard_atomic(g[1], names)
    sep = " & " if tag == "and" else " | "
    return sep.join(_guard_atomic(h, names) for h in g[1])


def _guard_atomic(g, names):
    s = guard_text(g, names)
    return f"({s})" if g[0] in ("and", "or") else s


def guard_formula(g: tuple, atoms: Sequence[Formula]) -> Formula:
    """Substitute first-order literals for the propositions of a guard."""
    tag = g[0]
    if tag == "t":
        return fm.TRUE
    if tag == "f":
        return fm.FALSE
    if tag == "ap":
        return atoms[g[1]]
    if tag == "not":
        return fm.negate(guard_formula(g[1], atoms))
    parts = [guard_formula(h, atoms) for h in g[1]]
    return fm.conj_all(parts) if tag == "and" else fm.disj_all(parts)


# ---------------------------------------------------------------------------
# HOA lexing and parsing

_HOA_TOKEN = re.compile(
    r"(?P<ws>\s+)|(?P<comment>/\*.*?\*/)"
    r'|(?P<str>"(?:[^"\\]|\\.)*")'
    r"|(?P<sep>--BODY--|--END--|--ABORT--)"
    r"|(?P<header>[A-Za-z_][A-Za-z0-9_-]*:)"
    r"|(?P<alias>@[A-Za-z0-9_-]+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_-]*)"
    r"|(?P<int>\d+)"
    r"|(?P<punct>[\[\]{}()!&|])",
    re.S,
)


def _hoa_lex(text: str) -> list:
    out, pos = [], 0
    while pos < len(text):
        m = _HOA_TOKEN.match(text, pos)
        if m is None:
            raise HoaError(f"unexpected character {text[pos]!r} at offset {pos}")
        pos = m.end()
        kind = m.lastgroup
        if kind in ("ws", "comment"):
            continue
        val = m.group(0)
        if kind == "str":
            val = bytes(val[1:-1], "utf-8").decode("unicode_escape")
        out.append((kind, val))
    out.append(("eof", ""))
    return out


@dataclass
class HoaEdge:
    guard: tuple
    dst: int
    marks: frozenset


@dataclass
class HoaAutomaton:
    """A parsed HOA file, before any normalisation."""

    n_states: int
    start: int
    aps: list
    n_sets: int
    acceptance: tuple  # ('t',) ('f',) ('Inf', k) ('Fin', k) ('and'|'or', (..))
    acc_name: str
    edges: dict  # state -> [HoaEdge]
    state_marks: dict  # state -> frozenset
    names: dict

    def inf_sets_accept(self, sets: Iterable[int]) -> bool:
        return acc_eval(self.acceptance, frozenset(sets))

    def step(self, s: int, val: Sequence[bool]):
        for e in self.edges.get(s, []):
            if guard_eval(e.guard, val):
                return e
        return None

    def accepts(self, stem: Sequence[Sequence[bool]], loop: Sequence[Sequence[bool]]) -> bool:
        """Acceptance of stem.loop^omega under the original acceptance condition."""
        word = list(stem) + list(loop)

        def step(s, pos):
            e = self.step(s, word[pos])
            return None if e is None else (e.dst, e.marks)

        trace = trace_lasso((self.start, frozenset()), len(stem), len(loop),
                            lambda st, pos: step(st[0], pos))
        if trace is None:
            return False  # an incomplete automaton rejects words it cannot read
        seq, start = trace
        inf = set()
        for s, m in seq[start:]:
            inf |= m | self.state_marks.get(s, frozenset())
        return self.inf_sets_accept(inf)


def acc_eval(c: tuple, inf: frozenset) -> bool:
    tag = c[0]
    if tag == "t":
        return True
    if tag == "f":
        return False
    if tag == "Inf":
        return c[1] in inf
    if tag == "Fin":
        return c[1] not in inf
    if tag == "and":
        return all(acc_eval(d, inf) for d in c[1])
    return any(acc_eval(d, inf) for d in c[1])


class _HoaParser:
    def __init__(self, text: str):
        self.toks = _hoa_lex(text)
        self.i = 0
        self.aliases: dict = {}

    @property
    def tok(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, kind, val=None):
        t = self.take()
        if t[0] != kind or (val is not None and t[1] != val):
            raise HoaError(f"expected {val or kind}, found {t[1] or 'end of input'!r}")
        return t[1]

    def integer(self) -> int:
        return int(self.expect("int"))

    # header ---------------------------------------------------------------

    def parse(self) -> HoaAutomaton:
        if self.tok != ("header", "HOA:"):
            raise HoaError("missing 'HOA:' header")
        headers: dict = {}
        while self.tok[0] != "sep":
            if self.tok[0] == "eof":
                raise HoaError("missing --BODY--")
            name = self.expect("header")[:-1]
            start = self.i
            if name == "Alias":
                alias = self.expect("alias")
                self.aliases[alias] = self.guard()
                continue
            if name == "Acceptance":
                n = self.integer()
                headers["Acceptance"] = (n, self.acc_cond())
                continue
            while self.tok[0] not in ("header", "sep", "eof"):
                self.take()
            headers.setdefault(name, []).append([v for _, v in self.toks[start:self.i]])
        if headers.get("HOA") != [["v1"]]:
            raise HoaError("only HOA v1 is supported")
        self.expect("sep", "--BODY--")
        n_states = int(headers["States"][0][0]) if "States" in headers else None
        starts = headers.get("Start", [])
        if len(starts) != 1 or len(starts[0]) != 1:
            raise HoaError("exactly one initial state is required (nondeterministic or alternating automaton)")
        aps = headers.get("AP", [["0"]])[0]
        if int(aps[0]) != len(aps) - 1:
            raise HoaError("AP count does not match the listed propositions")
        if "Acceptance" not in headers:
            raise HoaError("missing Acceptance header")
        n_sets, acc = headers["Acceptance"]
        acc_name = " ".join(headers.get("acc-name", [[]])[0])
        edges, marks, names = self.body()
        if n_states is None:
            n_states = max([s + 1 for s in edges] + [e.dst + 1 for es in edges.values() for e in es] + [1])
        for s, es in edges.items():
            if s >= n_states or any(e.dst >= n_states for e in es):
                raise HoaError(f"state index out of range near state {s}")
        return HoaAutomaton(n_states, int(starts[0][0]), list(aps[1:]), n_sets, acc, acc_name,
                            edges, marks, names)

    def acc_cond(self) -> tuple:
        left = self.acc_and()
        parts = [left]
        while self.tok == ("punct", "|"):
            self.take()
            parts.append(self.acc_and())
        return parts[0] if len(parts) == 1 else ("or", tuple(parts))

    def acc_and(self) -> tuple:
        parts = [self.acc_atom()]
        while self.tok == ("punct", "&"):
            self.take()
            parts.append(self.acc_atom())
        return parts[0] if len(parts) == 1 else ("and", tuple(parts))

    def acc_atom(self) -> tuple:
        kind, val = self.take()
        if kind == "ident" and val in ("t", "f"):
            return (val,)
        if kind == "ident" and val in ("Inf", "Fin"):
            self.expect("punct", "(")
            if self.tok == ("punct", "!"):
                raise HoaError("complemented acceptance sets are not supported")
            k = self.integer()
            self.expect("punct", ")")
            return (val, k)
        if (kind, val) == ("punct", "("):
            c = self.acc_cond()
            self.expect("punct", ")")
            return c
        raise HoaError(f"bad acceptance condition near {val!r}")

    # guards -----------------------------------------------------------------

    def guard(self) -> tuple:
        parts = [self.guard_and()]
        while self.tok == ("punct", "|"):
            self.take()
            parts.append(self.guard_and())
        return parts[0] if len(parts) == 1 else ("or", tuple(parts))

    def guard_and(self) -> tuple:
        parts = [self.guard_atom()]
        while self.tok == ("punct", "&"):
            self.take()
            parts.append(self.guard_atom())
        return parts[0] if len(parts) == 1 else ("and", tuple(parts))

    def guard_atom(self) -> tuple:
        kind, val = self.take()
        if kind == "ident" and val in ("t", "f"):
            return (val,)
        if kind == "int":
            return ("ap", int(val))
        if kind == "alias":
            if val not in self.aliases:
                raise HoaError(f"undefined alias {val}")
            return self.aliases[val]
        if (kind, val) == ("punct", "!"):
            return ("not", self.guard_atom())
        if (kind, val) == ("punct", "("):
            g = self.guard()
            self.expect("punct", ")")
            return g
        raise HoaError(f"bad guard near {val!r}")

    # body -------------------------------------------------------------------

    def marks(self) -> frozenset:
        if self.tok != ("punct", "{"):
            return frozenset()
        self.take()
        out = set()
        while self.tok != ("punct", "}"):
            out.add(self.integer())
        self.take()
        return frozenset(out)

    def body(self):
        edges, marks, names = {}, {}, {}
        while self.tok != ("sep", "--END--"):
            if self.tok == ("sep", "--ABORT--"):
                raise HoaError("automaton stream aborted")
            if self.tok != ("header", "State:"):
                raise HoaError(f"expected 'State:', found {self.tok[1] or 'end of input'!r}")
            self.take()
            label = None
            if self.tok == ("punct", "["):
                self.take()
                label = self.guard()
                self.expect("punct", "]")
            s = self.integer()
            if s in edges:
                raise HoaError(f"state {s} defined twice")
            if self.tok[0] == "str":
                names[s] = self.take()[1]
            marks[s] = self.marks()
            out = []
            while self.tok[0] in ("int", "punct") and self.tok != ("punct", "{"):
                g = label
                if self.tok == ("punct", "["):
                    if label is not None:
                        raise HoaError(f"state {s} has both a state label and edge labels")
                    self.take()
                    g = self.guard()
                    self.expect("punct", "]")
                if g is None:
                    raise HoaError("implicit edge labels are not supported")
                dst = self.integer()
                if self.tok == ("punct", "&"):
                    raise HoaError("universal branching is not supported")
                out.append(HoaEdge(g, dst, self.marks()))
            edges[s] = out
        self.take()
        return edges, marks, names


def parse_hoa_raw(text: str) -> HoaAutomaton:
    return _HoaParser(text).parse()


# ---------------------------------------------------------------------------
# parity automata


def parity_condition(sense: str, n: int, inf: frozenset) -> bool:
    """Acceptance of a parity condition over colors 0..n-1; no color seen is the neutral case."""
    hi_lo, par = sense.split("-")
    want = 0 if par == "even" else 1
    if not inf:
        # the neutral color sits below every real one: -1 for max, n for min
        return (-1 if hi_lo == "max" else n) % 2 == want
    c = max(inf) if hi_lo == "max" else min(inf)
    return c % 2 == want


PARITY_SENSES = ("max-even", "max-odd", "min-even", "min-odd")


def detect_parity_sense(aut: HoaAutomaton) -> str:
    """The parity sense whose condition agrees with the acceptance formula on every set of colors."""
    n = aut.n_sets
    if n > MAX_ACC_SETS:
        raise HoaError(f"more than {MAX_ACC_SETS} acceptance sets")
    subsets = [frozenset(c) for k in range(n + 1) for c in itertools.combinations(range(n), k)]
    for sense in PARITY_SENSES:
        if all(parity_condition(sense, n, s) == aut.inf_sets_accept(s) for s in subsets):
            return sense
    raise HoaError(f"acceptance is not a parity condition: {aut.acc_name or 'unnamed'}")


def _to_max_even(sense: str, n: int, color: Optional[int]) -> int:
    hi_lo, par = sense.split("-")
    if color is None:
        p = -1
    else:
        p = color if hi_lo == "max" else n - 1 - color
    # residue of p that the original condition accepts
    if hi_lo == "max":
        r = 0 if par == "even" else 1
    else:
        r = (n - 1) % 2 if par == "even" else n % 2
    return p + (2 if r == 0 else 1)


@dataclass
class ParityDPA:
    states: list
    initial: int
    aps: list
    transitions: dict  # state -> [(guard, dst)]
    coloring: dict  # state -> color, max-even
    acceptance: str = "max-even"
    names: dict = field(default_factory=dict)
    source: Optional[HoaAutomaton] = None

    def step(self, s: int, val: Sequence[bool]) -> int:
        for g, d in self.transitions[s]:
            if guard_eval(g, val):
                return d
        raise HoaError(f"no transition from state {s}")

    def accepts(self, stem: Sequence[Sequence[bool]], loop: Sequence[Sequence[bool]]) -> bool:
        word = list(stem) + list(loop)
        seq, start = trace_lasso(self.initial, len(stem), len(loop), lambda s, pos: self.step(s, word[pos]))
        return parity_winning(self.coloring[s] for s in seq[start:])


def check_deterministic(guards: Sequence[tuple], where: str = "") -> Optional[tuple]:
    """Raise on overlapping guards; return the uncovered remainder (or None when total)."""
    aps = sorted(set().union(*(guard_aps(g) for g in guards))) if guards else []
    if len(aps) > MAX_GUARD_APS:
        raise HoaError(f"{where}: more than {MAX_GUARD_APS} propositions in one state's guards")
    size = max(aps, default=-1) + 1
    covered_all = True
    for bits in itertools.product((False, True), repeat=len(aps)):
        val = [False] * size
        for k, b in zip(aps, bits):
            val[k] = b
        hits = [i for i, g in enumerate(guards) if guard_eval(g, val)]
        if len(hits) > 1:
            raise HoaError(f"{where}: guards {hits[0]} and {hits[1]} overlap (nondeterministic automaton)")
        if not hits:
            covered_all = False
    if covered_all:
        return None
    return ("not", ("or", tuple(guards))) if guards else TRUE_GUARD


def parse_hoa(text: str) -> ParityDPA:
    """Deterministic parity automaton from HOA v1 text, normalised to max-even state colors.

    Transition-based marks are moved onto target states; an incomplete
    automaton is completed with a rejecting sink.
    """
    aut = parse_hoa_raw(text)
    sense = detect_parity_sense(aut)
    n = aut.n_sets
    hi = sense.startswith("max")

    def color_of(ms: frozenset) -> Optional[int]:
        if not ms:
            return None
        return max(ms) if hi else min(ms)

    edges = {s: aut.edges.get(s, []) for s in range(aut.n_states)}
    transition_based = any(e.marks for es in edges.values() for e in es)
    raw_trans, raw_color, names = {}, {}, {}
    if not transition_based:
        for s in range(aut.n_states):
            raw_trans[s] = [(e.guard, e.dst) for e in edges[s]]
            raw_color[s] = color_of(aut.state_marks.get(s, frozenset()))
            if s in aut.names:
                names[s] = aut.names[s]
        init = aut.start
    else:
        # a state's own marks count on every edge leaving it
        index, todo = {}, deque()

        def node(s, ms):
            k = (s, ms)
            if k not in index:
                index[k] = len(index)
                todo.append(k)
            return index[k]

        init = node(aut.start, None)
        while todo:
            s, ms = todo.popleft()
            i = index[(s, ms)]
            own = aut.state_marks.get(s, frozenset())
            raw_trans[i] = [(e.guard, node(e.dst, e.marks | own)) for e in edges[s]]
            raw_color[i] = color_of(ms) if ms is not None else None
            names[i] = aut.names.get(s, str(s)) + ("" if ms is None else "/" + ",".join(map(str, sorted(ms))))
    states = sorted(raw_trans)
    coloring = {s: _to_max_even(sense, n, raw_color[s]) for s in states}
    sink = None
    for s in states:
        rest = check_deterministic([g for g, _ in raw_trans[s]], f"state {s}")
        if rest is not None:
            if sink is None:
                sink = max(states) + 1
            raw_trans[s].append((rest, sink))
    if sink is not None:
        states.append(sink)
        raw_trans[sink] = [(TRUE_GUARD, sink)]
        coloring[sink] = 1
        names[sink] = "sink"
    low = min(coloring.values())
    shift = low - low % 2
    coloring = {s: c - shift for s, c in coloring.items()}
    return ParityDPA(states, init, list(aut.aps), raw_trans, coloring, "max-even", names, aut)


def parity_winning(colors: Iterable[int]) -> bool:
    """Max-even acceptance of the colors seen infinitely often."""
    return max(colors) % 2 == 0


def trace_lasso(start, n_stem: int, n_loop: int, step: Callable) -> Optional[tuple]:
    """Follow a deterministic run over the positions of a lasso until (state, position) repeats.

    Returns (states, k) where states[k:] is the cycle, or None if step returns None.
    States are indexed by position: states[i] is the state before reading position i.
    """
    n = n_stem + n_loop
    seen: dict = {}
    seq = []
    s, pos = start, 0
    while (s, pos) not in seen:
        seen[(s, pos)] = len(seq)
        seq.append(s)
        s = step(s, pos)
        if s is None:
            return None
        pos = pos + 1 if pos + 1 < n else n_stem
    return seq, seen[(s, pos)]


# ---------------------------------------------------------------------------
# symbolic games


@dataclass
class SymbolicGame:
    """Locations with state domains, transition formulas over X, I, X', and per-location colors.

    Products additionally carry a verdict and the (game, monitor) pair per location.
    """

    locations: list
    init: int
    inputs: tuple
    program_vars: tuple
    dom: dict  # location -> Formula over X
    delta: dict  # (location, location) -> Formula over X, I, X'
    color: dict
    verdict: dict = field(default_factory=dict)
    pairs: dict = field(default_factory=dict)

    @property
    def is_product(self) -> bool:
        return bool(self.pairs)

    def successors(self, l: int) -> list:
        return sorted((d, f) for (s, d), f in self.delta.items() if s == l)

    def verdict_of(self, l: int) -> str:
        return self.verdict.get(l, OPEN)

    def step(self, l: int, pair_env: Mapping[str, int], next_env: Mapping[str, int]) -> Optional[int]:
        """The unique successor location for a valuation pair, or None if the move is blocked."""
        hits = [d for d, f in self._out(l)
                if fm.evaluate(f, pair_env) and fm.evaluate(self.dom[d], next_env)]
        if len(hits) > 1:
            raise GameError(f"location {l} has several successors for {dict(pair_env)}")
        return hits[0] if hits else None

    def _out(self, l):
        cache = self.__dict__.setdefault("_succ_cache", {})
        if l not in cache:
            cache[l] = self.successors(l)
        return cache[l]

    def reachable(self) -> set:
        seen, todo = {self.init}, [self.init]
        while todo:
            l = todo.pop()
            for d, f in self._out(l):
                if f != fm.FALSE and d not in seen:
                    seen.add(d)
                    todo.append(d)
        return seen


def atom_map_for(aps: Sequence[str], props=None, inputs=(), program_vars=()) -> dict:
    """Map HOA proposition names to literals: via a proposition map, or by parsing the name."""
    from . import rpltl as lt

    out = {}
    for name in aps:
        if props is not None and name in props.by_name:
            out[name] = props.literal(name)
            continue
        try:
            out[name] = lt.parse_qf(name, inputs, program_vars)
        except (lt.ParseError, fm.FormulaError) as e:
            raise GameError(f"unmapped proposition {name!r}: {e}") from None
    return out


def game_from_dpa(dpa: ParityDPA, atom_map: Mapping[str, Formula], inputs=(), program_vars=()) -> SymbolicGame:
    """Locations are automaton states, every domain is true, guards become first-order formulas."""
    missing = [a for a in dpa.aps if a not in atom_map]
    if missing:
        raise GameError(f"unmapped proposition(s): {', '.join(missing)}")
    atoms = [fm.canonicalize(atom_map[a]) for a in dpa.aps]
    delta = {}
    for s in dpa.states:
        by_dst: dict = {}
        for g, d in dpa.transitions[s]:
            by_dst.setdefault(d, []).append(guard_formula(g, atoms))
        for d, fs in by_dst.items():
            delta[(s, d)] = fm.canonicalize(fm.disj_all(fs))
    return SymbolicGame(
        locations=list(dpa.states), init=dpa.initial,
        inputs=tuple(sorted(inputs)), program_vars=tuple(sorted(program_vars)),
        dom={s: fm.TRUE for s in dpa.states}, delta=delta, color=dict(dpa.coloring))


@dataclass
class Violation:
    kind: str  # 'overlap' | 'blocking' | 'undecided'
    location: int
    detail: str


@dataclass
class WellformednessReport:
    violations: list = field(default_factory=list)
    checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def text(self) -> str:
        if self.ok:
            return f"well-formed: {self.checked} locations checked, no violations"
        lines = [f"{len(self.violations)} violation(s) in {self.checked} locations:"]
        lines += [f"  location {v.location}: {v.kind}: {v.detail}" for v in self.violations]
        return "\n".join(lines)


def check_wellformed(g: SymbolicGame, smt: SmtSession, locations: Optional[Iterable[int]] = None) -> WellformednessReport:
    """Determinism (outgoing transitions pairwise disjoint within the domain) and non-blocking per location."""
    rep = WellformednessReport()
    xs, ins = list(g.program_vars), list(g.inputs)
    shift = {x: fm.primed(x) for x in xs}
    for l in sorted(locations if locations is not None else g.locations):
        rep.checked += 1
        out = g.successors(l)
        for (d1, f1), (d2, f2) in itertools.combinations(out, 2):
            v = smt.check_sat(fm.conj_all([g.dom[l], f1, f2]))
            if v.is_sat:
                rep.violations.append(Violation("overlap", l, f"transitions to {d1} and {d2} overlap"))
            elif v.is_unknown:
                rep.violations.append(Violation("undecided", l, f"overlap of {d1} and {d2}: {v.reason}"))
        moves = fm.disj_all(fm.conj(f, fm.rename(g.dom[d], shift)) for d, f in out)
        stuck = fm.forall(ins + [fm.primed(x) for x in xs], fm.negate(moves)) if ins or xs else fm.negate(moves)
        v = smt.check_sat(fm.conj(g.dom[l], stuck))
        if v.is_sat:
            rep.violations.append(Violation("blocking", l, "some state in the domain has no move"))
        elif v.is_unknown:
            rep.violations.append(Violation("undecided", l, f"non-blocking check: {v.reason}"))
    return rep


# ---------------------------------------------------------------------------
# game-monitor product


def product(g: SymbolicGame, m, smt: SmtSession) -> SymbolicGame:
    """Reachable part of the synchronised product of a game and a monitor.

    Each game transition is refined by the monitor letters it is compatible
    with; unsatisfiable combinations are dropped.  Locations whose monitor
    state is UNSAT are made absorbing.
    """
    if tuple(sorted(g.inputs)) != tuple(sorted(m.inputs)) or \
            tuple(sorted(g.program_vars)) != tuple(sorted(m.program_vars)):
        raise GameError(f"variable sets differ: game {g.inputs}/{g.program_vars}, "
                        f"monitor {m.inputs}/{m.program_vars}")
    index: dict = {}
    pairs, todo = {}, deque()

    def loc(l, q):
        k = (l, q)
        if k not in index:
            index[k] = len(index)
            pairs[index[k]] = k
            todo.append(k)
        return index[k]

    loc(g.init, m.init)
    delta, dom, color, verdict = {}, {}, {}, {}
    letters = {}
    while todo:
        l, q = todo.popleft()
        i = index[(l, q)]
        dom[i], color[i] = g.dom[l], g.color[l]
        verdict[i] = m.verdicts.get(q, OPEN)
        if verdict[i] == UNSAT:
            delta[(i, i)] = fm.TRUE
            continue
        for d, f in g.successors(l):
            groups: dict = {}
            for a, q2 in m.transitions.get(q, []):
                if a not in letters:
                    letters[a] = a.formula(m.table)
                refined = fm.conj(f, letters[a])
                if refined == fm.FALSE or smt.check_sat(refined).is_unsat:
                    continue
                groups.setdefault(q2, []).append(letters[a])
            for q2, fs in groups.items():
                j = loc(d, q2)
                delta[(i, j)] = fm.canonicalize(fm.conj(f, fm.disj_all(fs)))
    return SymbolicGame(
        locations=sorted(pairs), init=0, inputs=g.inputs, program_vars=g.program_vars,
        dom=dom, delta=delta, color=color, verdict=verdict, pairs=pairs)


def winning_summary(p: SymbolicGame) -> str:
    """'unsat' if the initial location is UNSAT, 'safety' if every other reachable location is SAFETY,
    'parity' if none is, else 'mixed'."""
    if p.verdict_of(p.init) == UNSAT:
        return "unsat"
    live = [l for l in sorted(p.reachable()) if p.verdict_of(l) != UNSAT]
    n_safe = sum(1 for l in live if p.verdict_of(l) == SAFETY)
    if live and n_safe == len(live):
        return "safety"
    return "parity" if n_safe == 0 else "mixed"


# ---------------------------------------------------------------------------
# run tracing on lassos


def game_run(g: SymbolicGame, rho) -> Optional[tuple]:
    """The unique run of g on a lasso as (locations, cycle start), or None if it is blocked."""
    if not fm.evaluate(g.dom[g.init], rho[0]):
        return None
    return trace_lasso(g.init, len(rho.stem), len(rho.loop),
                       lambda l, pos: g.step(l, rho.step_env(pos), rho[rho.succ(pos)]))


def in_pseudo_language(g: SymbolicGame, rho) -> bool:
    """Membership of a lasso in the pseudo-language of g with its location-based winning condition.

    Plain games use the parity condition; products additionally require
    that no UNSAT location is visited and accept once a SAFETY location is.
    """
    run = game_run(g, rho)
    if run is None:
        return False
    seq, start = run
    if g.is_product:
        seen = {g.verdict_of(l) for l in seq}
        if UNSAT in seen:
            return False
        if SAFETY in seen:
            return True
    return parity_winning(g.color[l] for l in seq[start:])


# ---------------------------------------------------------------------------
# text format


def _smt_name(v: str) -> str:
    base = unprimed(v) + "_p" if is_primed(v) else v
    return base if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", base) and base not in _SMT_RESERVED else f"|{base}|"


_SMT_RESERVED = {"and", "or", "not", "true", "false", "ite", "let", "forall", "exists", "distinct", "div", "mod"}


def _check_names(g: SymbolicGame) -> None:
    names = set(g.inputs) | set(g.program_vars)
    for x in g.program_vars:
        if x + "_p" in names:
            raise GameError(f"variable {x + '_p'!r} clashes with the rendering of {x}'")


def serialize(g: SymbolicGame) -> str:
    """Text form: header, one ``loc`` line per location, one ``trans`` line per transition, winning block."""
    _check_names(g)

    def term(f):
        return fm.to_smt(f, _smt_name)

    lines = ["game v1", " ".join(("inputs:",) + tuple(g.inputs)), " ".join(("vars:",) + tuple(g.program_vars)),
             f"init: {g.init}"]
    for l in sorted(g.locations):
        pair = f" pair={g.pairs[l][0]},{g.pairs[l][1]}" if l in g.pairs else ""
        lines.append(f"loc {l} color={g.color[l]} verdict={g.verdict_of(l)}{pair} dom={term(g.dom[l])}")
    for (s, d) in sorted(g.delta):
        lines.append(f"trans {s} {d} guard={term(g.delta[(s, d)])}")
    unsat = [l for l in sorted(g.locations) if g.verdict_of(l) == UNSAT]
    safe = [l for l in sorted(g.locations) if g.verdict_of(l) == SAFETY]
    lines.append("winning parity=max-even")
    lines.append("winning unsat=" + ",".join(map(str, unsat)))
    lines.append("winning safety=" + ",".join(map(str, safe)))
    lines.append(f"winning summary={winning_summary(g)}")
    return "\n".join(lines) + "\n"


_LOC = re.compile(r"loc (\d+) color=(\d+) verdict=(UNSAT|SAFETY|OPEN)(?: pair=(\d+),(\d+))? dom=(.*)")
_TRANS = re.compile(r"trans (\d+) (\d+) guard=(.*)")


def parse_game(text: str) -> SymbolicGame:
    """Inverse of serialize."""
    inputs, pvars, init = (), (), None
    locs, dom, color, verdict, pairs, delta = [], {}, {}, {}, {}, {}
    symbols: dict = {}

    def formula(src: str, lineno: int) -> Formula:
        try:
            exprs = parse_sexps(src)
            if len(exprs) != 1:
                raise SexpError("expected exactly one term")
            return fm.canonicalize(sexp_to_formula(exprs[0], symbols=lambda s: symbols.get(s, s)))
        except (SexpError, fm.FormulaError) as e:
            raise GameError(f"line {lineno}: {e}") from None

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#") or line == "game v1":
            continue
        if line.startswith("inputs:"):
            inputs = tuple(line[7:].split())
        elif line.startswith("vars:"):
            pvars = tuple(line[5:].split())
            symbols = {x + "_p": fm.primed(x) for x in pvars}
        elif line.startswith("init:"):
            init = int(line[5:])
        elif line.startswith("loc "):
            m = _LOC.fullmatch(line)
            if m is None:
                raise GameError(f"line {lineno}: malformed location")
            l = int(m.group(1))
            locs.append(l)
            color[l], verdict[l] = int(m.group(2)), m.group(3)
            if m.group(4) is not None:
                pairs[l] = (int(m.group(4)), int(m.group(5)))
            dom[l] = formula(m.group(6), lineno)
        elif line.startswith("trans "):
            m = _TRANS.fullmatch(line)
            if m is None:
                raise GameError(f"line {lineno}: malformed transition")
            delta[(int(m.group(1)), int(m.group(2)))] = formula(m.group(3), lineno)
        elif line.startswith("winning"):
            continue
        else:
            raise GameError(f"line {lineno}: unrecognised line")
    if init is None:
        raise GameError("missing init line")
    return SymbolicGame(sorted(locs), init, inputs, pvars, dom, delta, color,
                        verdict if pairs else {l: v for l, v in verdict.items() if v != OPEN}, pairs)


def canonical_keys(g: SymbolicGame) -> tuple:
    """Comparable summary used for round-trip checks."""
    return (tuple(sorted(g.locations)), g.init, tuple(g.inputs), tuple(g.program_vars),
            tuple((l, fm.canonicalize(g.dom[l]).key, g.color[l], g.verdict_of(l)) for l in sorted(g.locations)),
            tuple((k, fm.canonicalize(v).key) for k, v in sorted(g.delta.items())),
            tuple(sorted(g.pairs.items())))


def to_json(g: SymbolicGame) -> dict:
    """Dictionary form with pretty-printed formulas (for inspection, not re-parsing)."""
    return {
        "inputs": list(g.inputs),
        "program_vars": list(g.program_vars),
        "init": g.init,
        "locations": [
            {"id": l, "color": g.color[l], "verdict": g.verdict_of(l), "dom": fm.pretty(g.dom[l]),
             **({"pair": list(g.pairs[l])} if l in g.pairs else {})}
            for l in sorted(g.locations)],
        "transitions": [{"from": s, "to": d, "guard": fm.pretty(f)} for (s, d), f in sorted(g.delta.items())],
        "winning": {"parity": "max-even", "summary": winning_summary(g)},
    }


_DOT_FILL = {UNSAT: "lightcoral", SAFETY: "palegreen", OPEN: "white"}


def to_dot(g: SymbolicGame) -> str:
    lines = ["digraph game {", "  rankdir=LR;", '  node [shape=box, style=filled, fontname="monospace"];',
             '  __init [shape=point, style=""];', f"  __init -> l{g.init};"]
    for l in sorted(g.locations):
        pair = f" {g.pairs[l]}" if l in g.pairs else ""
        lines.append(f'  l{l} [label="{l}{pair}\\ncolor {g.color[l]}", fillcolor={_DOT_FILL[g.verdict_of(l)]}];')
    for (s, d), f in sorted(g.delta.items()):
        label = fm.pretty(f).replace("\\", "\\\\").replace('"', '\\"')
        lines.append(f'  l{s} -> l{d} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def export(g: SymbolicGame, fmt: str = "game") -> str:
    if fmt == "game":
        return serialize(g)
    if fmt == "json":
        return json.dumps(to_json(g), indent=2) + "\n"
    if fmt == "dot":
        return to_dot(g)
    raise ValueError(f"unknown game format {fmt!r}")
