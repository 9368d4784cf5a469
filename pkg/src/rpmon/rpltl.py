"""Temporal formulas whose atoms are first-order literals.

An atom is evaluated on a pair of consecutive positions: unprimed names read
the current valuation, primed names the next one.  ``F``, ``G`` and ``W`` are
kept as first-class nodes instead of being desugared into ``U``.

The smart constructors (``t_and``, ``t_or``, ``t_next`` ...) build canonical
formulas: negation only on atoms, flattened and sorted junctions, and a small
catalogue of constant rewrites.  ``nnf`` maps an arbitrary formula into that
shape.
"""

from __future__ import annotations

import hashlib
import itertools
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Optional, Sequence

from . import formula as fm
from .formula import Formula, Lin, is_primed, unprimed

# ---------------------------------------------------------------------------
# AST


class LTL:
    """Base class.  Equality and hashing go through the canonical key string."""

    __slots__ = ()

    @cached_property
    def key(self) -> str:
        return self._key()

    @cached_property
    def digest(self) -> str:
        return hashlib.sha256(self.key.encode()).hexdigest()[:16]

    def __eq__(self, other):
        return isinstance(other, LTL) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __str__(self):
        return to_text(self)

    def __repr__(self):
        return f"<{type(self).__name__} {to_text(self)}>"


@dataclass(frozen=True, eq=False)
class Const(LTL):
    value: bool

    def _key(self):
        return "T" if self.value else "F!"


@dataclass(frozen=True, eq=False)
class Lit(LTL):
    """A first-order formula used as an atom; canonical ones hold a single literal."""

    qf: Formula

    def _key(self):
        return self.qf.key


@dataclass(frozen=True, eq=False)
class Neg(LTL):
    arg: LTL

    def _key(self):
        return f"(! {self.arg.key})"


@dataclass(frozen=True, eq=False)
class Conj(LTL):
    args: tuple

    def _key(self):
        return "(& " + " ".join(a.key for a in self.args) + ")"


@dataclass(frozen=True, eq=False)
class Disj(LTL):
    args: tuple

    def _key(self):
        return "(| " + " ".join(a.key for a in self.args) + ")"


@dataclass(frozen=True, eq=False)
class Imp(LTL):
    left: LTL
    right: LTL

    def _key(self):
        return f"(-> {self.left.key} {self.right.key})"


@dataclass(frozen=True, eq=False)
class Next(LTL):
    arg: LTL

    def _key(self):
        return f"(X {self.arg.key})"


@dataclass(frozen=True, eq=False)
class Until(LTL):
    left: LTL
    right: LTL

    def _key(self):
        return f"(U {self.left.key} {self.right.key})"


@dataclass(frozen=True, eq=False)
class WeakUntil(LTL):
    left: LTL
    right: LTL

    def _key(self):
        return f"(W {self.left.key} {self.right.key})"


@dataclass(frozen=True, eq=False)
class Eventually(LTL):
    arg: LTL

    def _key(self):
        return f"(F {self.arg.key})"


@dataclass(frozen=True, eq=False)
class Globally(LTL):
    arg: LTL

    def _key(self):
        return f"(G {self.arg.key})"


TT = Const(True)
FF = Const(False)

TEMPORAL = (Next, Until, WeakUntil, Eventually, Globally)
UNARY = (Neg, Next, Eventually, Globally)
BINARY = (Imp, Until, WeakUntil)


def children(f: LTL) -> tuple:
    if isinstance(f, (Conj, Disj)):
        return f.args
    if isinstance(f, UNARY):
        return (f.arg,)
    if isinstance(f, BINARY):
        return (f.left, f.right)
    return ()


def subformulas(f: LTL) -> list:
    """All subformulas, children before parents, without duplicates."""
    seen, out = set(), []

    def walk(g):
        if g in seen:
            return
        for c in children(g):
            walk(c)
        seen.add(g)
        out.append(g)

    walk(f)
    return out


# ---------------------------------------------------------------------------
# canonical constructors


def lit(qf: Formula) -> LTL:
    """Lift a first-order formula, splitting its Boolean structure into temporal junctions."""
    qf = fm.canonicalize(qf)
    if isinstance(qf, fm.BoolConst):
        return TT if qf.value else FF
    if isinstance(qf, fm.And):
        return t_and(*(lit(a) for a in qf.args))
    if isinstance(qf, fm.Or):
        return t_or(*(lit(a) for a in qf.args))
    if isinstance(qf, fm.Quant):
        raise fm.FormulaError("quantifiers are not allowed inside temporal formulas")
    return Lit(qf)


def _neg_lit(f: Lit) -> LTL:
    return Lit(fm.negate_literal(f.qf))


def _junction(cls, args) -> LTL:
    unit, zero = (TT, FF) if cls is Conj else (FF, TT)
    flat = {}
    for a in args:
        if isinstance(a, cls):
            for b in a.args:
                flat[b.key] = b
        elif a == zero:
            return zero
        elif a != unit:
            flat[a.key] = a
    for a in flat.values():
        if isinstance(a, Lit):
            n = _neg_lit(a)
            if n.key in flat:
                return zero
    if not flat:
        return unit
    if len(flat) == 1:
        return next(iter(flat.values()))
    return cls(tuple(flat[k] for k in sorted(flat)))


def t_and(*args: LTL) -> LTL:
    return _junction(Conj, args)


def t_or(*args: LTL) -> LTL:
    return _junction(Disj, args)


def t_and_all(args: Iterable[LTL]) -> LTL:
    return _junction(Conj, tuple(args))


def t_or_all(args: Iterable[LTL]) -> LTL:
    return _junction(Disj, tuple(args))


def t_next(f: LTL) -> LTL:
    if isinstance(f, Const):
        return f
    return Next(f)


def t_globally(f: LTL) -> LTL:
    if isinstance(f, Const):
        return f
    if isinstance(f, Globally):
        return f
    return Globally(f)


def t_eventually(f: LTL) -> LTL:
    if isinstance(f, Const):
        return f
    if isinstance(f, Eventually):
        return f
    return Eventually(f)


def t_until(a: LTL, b: LTL) -> LTL:
    if isinstance(b, Const):
        return b
    if a == FF:
        return b
    if a == TT:
        return t_eventually(b)
    if a == b:
        return b
    return Until(a, b)


def t_weak(a: LTL, b: LTL) -> LTL:
    if b == TT or a == TT:
        return TT
    if b == FF:
        return t_globally(a)
    if a == FF:
        return b
    if a == b:
        return b
    return WeakUntil(a, b)


def nnf(f: LTL) -> LTL:
    """Canonical negation normal form."""
    return _nnf(f, True)


def negation(f: LTL) -> LTL:
    """Canonical NNF of the negation of f."""
    return _nnf(f, False)


def _nnf(f: LTL, pos: bool) -> LTL:
    if isinstance(f, Const):
        return f if pos else Const(not f.value)
    if isinstance(f, Lit):
        return lit(f.qf if pos else fm.negate(f.qf))
    if isinstance(f, Neg):
        return _nnf(f.arg, not pos)
    if isinstance(f, Conj):
        parts = [_nnf(a, pos) for a in f.args]
        return t_and_all(parts) if pos else t_or_all(parts)
    if isinstance(f, Disj):
        parts = [_nnf(a, pos) for a in f.args]
        return t_or_all(parts) if pos else t_and_all(parts)
    if isinstance(f, Imp):
        if pos:
            return t_or(_nnf(f.left, False), _nnf(f.right, True))
        return t_and(_nnf(f.left, True), _nnf(f.right, False))
    if isinstance(f, Next):
        return t_next(_nnf(f.arg, pos))
    if isinstance(f, Globally):
        return t_globally(_nnf(f.arg, True)) if pos else t_eventually(_nnf(f.arg, False))
    if isinstance(f, Eventually):
        return t_eventually(_nnf(f.arg, True)) if pos else t_globally(_nnf(f.arg, False))
    if isinstance(f, Until):
        if pos:
            return t_until(_nnf(f.left, True), _nnf(f.right, True))
        nl, nr = _nnf(f.left, False), _nnf(f.right, False)
        return t_weak(nr, t_and(nl, nr))
    if isinstance(f, WeakUntil):
        if pos:
            return t_weak(_nnf(f.left, True), _nnf(f.right, True))
        nl, nr = _nnf(f.left, False), _nnf(f.right, False)
        return t_until(nr, t_and(nl, nr))
    raise TypeError(f"not a temporal formula: {f!r}")


# ---------------------------------------------------------------------------
# classification helpers


def is_temporal_free(f: LTL) -> bool:
    """No X/U/W/F/G anywhere: the formula is first-order."""
    return not any(isinstance(g, TEMPORAL) for g in subformulas(f))


def to_qf(f: LTL) -> Formula:
    """First-order formula for a temporal-free f."""
    if isinstance(f, Const):
        return fm.TRUE if f.value else fm.FALSE
    if isinstance(f, Lit):
        return f.qf
    if isinstance(f, Neg):
        return fm.negate(to_qf(f.arg))
    if isinstance(f, Conj):
        return fm.conj_all(to_qf(a) for a in f.args)
    if isinstance(f, Disj):
        return fm.disj_all(to_qf(a) for a in f.args)
    if isinstance(f, Imp):
        return fm.disj(fm.negate(to_qf(f.left)), to_qf(f.right))
    raise fm.FormulaError(f"temporal operator in first-order context: {to_text(f)}")


def is_syntactic_safety(f: LTL) -> bool:
    """True iff the NNF contains neither U nor F."""
    return not any(isinstance(g, (Until, Eventually)) for g in subformulas(nnf(f)))


def literals(f: LTL) -> list:
    """Distinct Lit nodes of f in first-occurrence order."""
    out, seen = [], set()
    for g in _preorder(f):
        if isinstance(g, Lit) and g.key not in seen:
            seen.add(g.key)
            out.append(g)
    return out


def _preorder(f: LTL):
    stack = [f]
    while stack:
        g = stack.pop()
        yield g
        stack.extend(reversed(children(g)))


def qf_atoms(f: LTL) -> set:
    """Canonical first-order atoms (without polarity) occurring in f."""
    out = set()
    for l in literals(f):
        out |= fm.atoms(l.qf)
    return out


def variables(f: LTL) -> frozenset:
    out = set()
    for l in literals(f):
        out |= fm.free_vars(l.qf)
    return frozenset(out)


def closure(f: LTL) -> frozenset:
    """The finite closure set: subformulas and the combinations expansion can produce."""
    if isinstance(f, Const):
        return frozenset({TT, FF})
    if isinstance(f, Lit):
        return frozenset({f, TT, FF})
    if isinstance(f, Neg):
        c = closure(f.arg)
        return c | {Neg(g) for g in c}
    if isinstance(f, Next):
        c = closure(f.arg)
        return c | {Next(g) for g in c}
    if isinstance(f, (Conj, Disj)):
        acc = closure(f.args[0])
        for a in f.args[1:]:
            c = closure(a)
            acc = acc | c | {type(f)((x, y)) for x in acc for y in c}
        return acc
    if isinstance(f, Imp):
        return closure(Disj((Neg(f.left), f.right)))
    if isinstance(f, (Until, WeakUntil)):
        c1, c2 = closure(f.left), closure(f.right)
        return c1 | c2 | {type(f)(x, y) for x in c1 for y in c2}
    if isinstance(f, Eventually):
        return closure(Until(TT, f.arg))
    if isinstance(f, Globally):
        return closure(Neg(Eventually(Neg(f.arg))))
    raise TypeError(f"not a temporal formula: {f!r}")


# ---------------------------------------------------------------------------
# printing


_PREC = {Imp: 1, Disj: 2, Conj: 3, Until: 4, WeakUntil: 4}


def to_text(f: LTL, qf_printer=fm.pretty) -> str:
    """Render in the specification syntax (re-parsable)."""
    return _text(f, qf_printer)


def _text(f: LTL, p) -> str:
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Lit):
        s = p(f.qf)
        return s if _is_single(f.qf) else f"({s})"
    if isinstance(f, UNARY):
        op = {Neg: "!", Next: "X", Eventually: "F", Globally: "G"}[type(f)]
        inner = _text(f.arg, p)
        if isinstance(f.arg, (Conj, Disj, Imp, Until, WeakUntil)) or (
            isinstance(f.arg, Lit) and _is_single(f.arg.qf)
        ):
            inner = f"({inner})"
        return f"{op} {inner}"
    if isinstance(f, (Conj, Disj)):
        sep = " && " if isinstance(f, Conj) else " || "
        return sep.join(_wrap(a, f, p) for a in f.args)
    if isinstance(f, Imp):
        return f"{_wrap(f.left, f, p, True)} -> {_wrap(f.right, f, p)}"
    if isinstance(f, (Until, WeakUntil)):
        op = " U " if isinstance(f, Until) else " W "
        return _wrap(f.left, f, p, True) + op + _wrap(f.right, f, p, True)
    raise TypeError(f"not a temporal formula: {f!r}")


def _is_single(qf: Formula) -> bool:
    return fm.is_literal(qf) or isinstance(qf, fm.BoolConst)


def _wrap(child: LTL, parent: LTL, p, strict: bool = False) -> str:
    s = _text(child, p)
    cp = _PREC.get(type(child))
    pp = _PREC[type(parent)]
    if cp is not None and (cp < pp or (strict and cp == pp)):
        return f"({s})"
    return s


# ---------------------------------------------------------------------------
# Booleanization


@dataclass
class PropMap:
    """Proposition name <-> first-order literal; the opposite literal maps to the negated proposition."""

    by_name: dict = field(default_factory=dict)
    by_key: dict = field(default_factory=dict)  # literal key -> (name, polarity)

    def prop_for(self, l: Formula) -> tuple:
        hit = self.by_key.get(l.key)
        if hit is not None:
            return hit
        name = f"p{len(self.by_name)}"
        self.by_name[name] = l
        self.by_key[l.key] = (name, True)
        if fm.is_literal(l):
            self.by_key[fm.negate_literal(l).key] = (name, False)
        return name, True

    def literal(self, name: str, polarity: bool = True) -> Formula:
        l = self.by_name[name]
        return l if polarity else fm.negate(l)

    def items(self):
        return self.by_name.items()


def booleanize(f, props: Optional[PropMap] = None) -> tuple:
    """Propositional LTL text plus the proposition map.  Accepts a formula or a Spec."""
    props = props if props is not None else PropMap()
    if isinstance(f, Spec):
        f = f.formula()
    return _btext(f, props), props


def _btext(f: LTL, props: PropMap) -> str:
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Lit):
        qf = fm.canonicalize(f.qf)
        if not _is_single(qf):
            return "(" + _btext(lit(qf), props) + ")"
        if isinstance(qf, fm.BoolConst):
            return "true" if qf.value else "false"
        name, pol = props.prop_for(qf)
        return name if pol else f"!{name}"
    if isinstance(f, UNARY):
        op = {Neg: "!", Next: "X", Eventually: "F", Globally: "G"}[type(f)]
        inner = _btext(f.arg, props)
        if children(f.arg):
            inner = f"({inner})"
        return f"{op} {inner}"
    if isinstance(f, (Conj, Disj)):
        sep = " & " if isinstance(f, Conj) else " | "
        return sep.join(_bwrap(a, props) for a in f.args)
    if isinstance(f, Imp):
        return f"{_bwrap(f.left, props)} -> {_bwrap(f.right, props)}"
    if isinstance(f, (Until, WeakUntil)):
        op = " U " if isinstance(f, Until) else " W "
        return _bwrap(f.left, props) + op + _bwrap(f.right, props)
    raise TypeError(f"not a temporal formula: {f!r}")


def _bwrap(f: LTL, props: PropMap) -> str:
    s = _btext(f, props)
    return f"({s})" if isinstance(f, (Conj, Disj, Imp, Until, WeakUntil)) else s


def unbooleanize(text: str, props: PropMap) -> LTL:
    """Parse propositional LTL text, putting the first-order literals back in place of p<k>."""
    def sub(m):
        return "(" + fm.pretty(props.literal(m.group(0))) + ")"
    return parse_formula(re.sub(r"\bp\d+\b", sub, text))


# ---------------------------------------------------------------------------
# lasso semantics


class LassoError(ValueError):
    pass


@dataclass(frozen=True)
class Lasso:
    """The infinite word stem . loop^omega over valuations of X and I."""

    stem: tuple
    loop: tuple

    def __post_init__(self):
        if not self.loop:
            raise LassoError("lasso loop must be nonempty")
        object.__setattr__(self, "stem", tuple(dict(v) for v in self.stem))
        object.__setattr__(self, "loop", tuple(dict(v) for v in self.loop))

    def __len__(self):
        return len(self.stem) + len(self.loop)

    def __getitem__(self, i: int) -> dict:
        if i < len(self.stem):
            return self.stem[i]
        return self.loop[(i - len(self.stem)) % len(self.loop)]

    def succ(self, i: int) -> int:
        """Successor index inside the finite representation."""
        return i + 1 if i + 1 < len(self) else len(self.stem)

    def shift(self, k: int = 1) -> "Lasso":
        for _ in range(k):
            if self.stem:
                self = Lasso(self.stem[1:], self.loop)
            else:
                self = Lasso((), self.loop[1:] + self.loop[:1])
        return self

    def step_env(self, i: int) -> dict:
        """Valuation of the pair (rho[i], rho[i+1]) with primed names for the latter."""
        env = dict(self[i])
        for k, v in self[i + 1].items():
            env[k + "'"] = v
        return env

    def positions(self) -> list:
        return [self[i] for i in range(len(self))]


def lasso_eval(f: LTL, rho: Lasso, at: int = 0) -> bool:
    """Exact truth of f on the infinite word rho, starting at position ``at``."""
    if at >= len(rho):
        at = len(rho.stem) + (at - len(rho.stem)) % len(rho.loop)
    return lasso_table(f, rho)[f][at]


def lasso_table(f: LTL, rho: Lasso) -> dict:
    n = len(rho)
    succ = [rho.succ(i) for i in range(n)]
    envs = [rho.step_env(i) for i in range(n)]
    table: dict = {}
    for g in subformulas(f):
        table[g] = _eval_node(g, table, envs, succ, n)
    return table


def _eval_node(g, table, envs, succ, n) -> list:
    if isinstance(g, Const):
        return [g.value] * n
    if isinstance(g, Lit):
        try:
            return [fm.evaluate(g.qf, e) for e in envs]
        except KeyError as e:
            raise LassoError(f"lasso does not assign variable {e.args[0]}") from None
    if isinstance(g, Neg):
        return [not v for v in table[g.arg]]
    if isinstance(g, Conj):
        cols = [table[a] for a in g.args]
        return [all(c[i] for c in cols) for i in range(n)]
    if isinstance(g, Disj):
        cols = [table[a] for a in g.args]
        return [any(c[i] for c in cols) for i in range(n)]
    if isinstance(g, Imp):
        l, r = table[g.left], table[g.right]
        return [(not l[i]) or r[i] for i in range(n)]
    if isinstance(g, Next):
        a = table[g.arg]
        return [a[succ[i]] for i in range(n)]
    if isinstance(g, Until):
        return _fix(table[g.left], table[g.right], succ, n, False)
    if isinstance(g, WeakUntil):
        return _fix(table[g.left], table[g.right], succ, n, True)
    if isinstance(g, Eventually):
        return _fix([True] * n, table[g.arg], succ, n, False)
    if isinstance(g, Globally):
        return _fix(table[g.arg], [False] * n, succ, n, True)
    raise TypeError(f"not a temporal formula: {g!r}")


def _fix(hold, goal, succ, n, init) -> list:
    """v[i] = goal[i] or (hold[i] and v[succ i]); least fixpoint from False, greatest from True."""
    v = [init] * n
    changed = True
    while changed:
        changed = False
        for i in reversed(range(n)):
            new = goal[i] or (hold[i] and v[succ[i]])
            if new != v[i]:
                v[i] = new
                changed = True
    return v


# ---------------------------------------------------------------------------
# specifications


@dataclass(frozen=True)
class VarDecl:
    name: str
    kind: str  # 'input' | 'var'
    sort: str = "int"


@dataclass(frozen=True)
class Spec:
    decls: tuple
    assumptions: tuple
    guarantees: tuple

    @property
    def inputs(self) -> tuple:
        return tuple(d.name for d in self.decls if d.kind == "input")

    @property
    def program_vars(self) -> tuple:
        return tuple(d.name for d in self.decls if d.kind == "var")

    def assumption(self) -> LTL:
        return t_and_all(nnf(a) for a in self.assumptions)

    def guarantee(self) -> LTL:
        return t_and_all(nnf(g) for g in self.guarantees)

    def formula(self) -> LTL:
        """The specification as a single implication (raw, not normalised)."""
        a = _conj_raw(self.assumptions)
        g = _conj_raw(self.guarantees)
        return g if a == TT else Imp(a, g)

    def to_text(self) -> str:
        lines = []
        for d in self.decls:
            lines.append(f"{d.kind} {d.name} : {d.sort};")
        for a in self.assumptions:
            lines.append(f"assume {to_text(a)};")
        for g in self.guarantees:
            lines.append(f"guarantee {to_text(g)};")
        return "\n".join(lines) + "\n"


def _conj_raw(fs) -> LTL:
    fs = [f for f in fs if f != TT]
    if not fs:
        return TT
    if len(fs) == 1:
        return fs[0]
    return Conj(tuple(fs))


# ---------------------------------------------------------------------------
# parser


class ParseError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}" if line else msg)
        self.msg, self.line, self.col = msg, line, col


_TOKEN = re.compile(
    r"(?P<ws>\s+)|(?P<comment>(//|#)[^\n]*)"
    r"|(?P<int>\d+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*'?)"
    r"|(?P<op>->|<->|&&|\|\||<=|>=|!=|==|[<>=!+\-*();:,&|])"
)

_KEYWORDS = {"G", "F", "X", "U", "W", "true", "false", "input", "var", "assume",
             "guarantee", "int"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _lex(text: str) -> list:
    toks, pos, line, lstart = [], 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - lstart + 1)
        kind = m.lastgroup
        s = m.group()
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, s, line, pos - lstart + 1))
        nl = s.count("\n")
        if nl:
            line += nl
            lstart = pos + s.rfind("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - lstart + 1))
    return toks


class _Parser:
    def __init__(self, text: str, inputs=None, program_vars=None):
        self.toks = _lex(text)
        self.i = 0
        self.inputs = set(inputs or ())
        self.pvars = set(program_vars or ())
        self.strict = inputs is not None or program_vars is not None

    # token helpers
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def err(self, msg, tok=None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col)

    def take(self) -> _Tok:
        t = self.tok
        self.i += 1
        return t

    def accept(self, text) -> bool:
        if self.tok.text == text and self.tok.kind in ("op", "ident"):
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            self.err(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")

    # specification file
    def spec(self) -> Spec:
        decls, assumes, guars = [], [], []
        while self.tok.kind != "eof":
            t = self.tok
            if t.text in ("input", "var") and t.kind == "ident":
                self.take()
                names = [self.name()]
                while self.accept(","):
                    names.append(self.name())
                self.expect(":")
                sort_tok = self.take()
                if sort_tok.text == "bool":
                    self.err("sort 'bool' is not supported; encode it as an int restricted to {0, 1}", sort_tok)
                if sort_tok.text != "int":
                    self.err(f"unknown sort {sort_tok.text!r}", sort_tok)
                self.expect(";")
                for n in names:
                    if n in self.inputs or n in self.pvars:
                        self.err(f"variable {n!r} declared twice", t)
                    (self.inputs if t.text == "input" else self.pvars).add(n)
                    decls.append(VarDecl(n, t.text))
                self.strict = True
            elif t.text in ("assume", "guarantee") and t.kind == "ident":
                self.take()
                f = self.formula()
                self.expect(";")
                (assumes if t.text == "assume" else guars).append(f)
            else:
                self.err(f"expected a declaration, 'assume' or 'guarantee', found {t.text!r}")
        if not guars:
            guars = [TT]
        return Spec(tuple(decls), tuple(assumes), tuple(guars))

    def name(self) -> str:
        t = self.take()
        if t.kind != "ident" or t.text in _KEYWORDS or t.text.endswith("'"):
            self.err(f"expected a variable name, found {t.text!r}", t)
        if _temporal_run(t.text):
            self.err(f"{t.text!r} clashes with temporal operators", t)
        return t.text

    # formulas, lowest precedence first
    def formula(self) -> LTL:
        left = self.disj()
        if self.accept("->"):
            return Imp(left, self.formula())
        if self.accept("<->"):
            right = self.formula()
            return Conj((Imp(left, right), Imp(right, left)))
        return left

    def disj(self) -> LTL:
        args = [self.conj()]
        while self.accept("||") or self.accept("|"):
            args.append(self.conj())
        return args[0] if len(args) == 1 else Disj(tuple(args))

    def conj(self) -> LTL:
        args = [self.binary()]
        while self.accept("&&") or self.accept("&"):
            args.append(self.binary())
        return args[0] if len(args) == 1 else Conj(tuple(args))

    def binary(self) -> LTL:
        left = self.unary()
        if self.tok.kind == "ident" and self.tok.text in ("U", "W"):
            op = self.take().text
            right = self.binary()
            return Until(left, right) if op == "U" else WeakUntil(left, right)
        return left

    def unary(self) -> LTL:
        t = self.tok
        if t.kind == "op" and t.text == "!":
            self.take()
            return Neg(self.unary())
        if t.kind == "ident" and _temporal_run(t.text) and t.text not in self.pvars | self.inputs:
            self.take()
            f = self.unary()
            for c in reversed(t.text):
                f = {"G": Globally, "F": Eventually, "X": Next}[c](f)
            return f
        return self.primary()

    def primary(self) -> LTL:
        t = self.tok
        if t.kind == "ident" and t.text in ("true", "false"):
            self.take()
            return TT if t.text == "true" else FF
        if t.text == "(":
            save = self.i
            try:
                return self.comparison()
            except ParseError:
                self.i = save
            self.take()
            f = self.formula()
            self.expect(")")
            return f
        return self.comparison()

    def comparison(self) -> LTL:
        left = self.term()
        t = self.tok
        ops = {"<", "<=", "=", "==", ">=", ">", "!="}
        if not (t.kind == "op" and t.text in ops):
            self.err(f"expected a comparison operator, found {t.text or 'end of input'!r}")
        self.take()
        right = self.term()
        op = "=" if t.text == "==" else t.text
        return Lit(fm.compare(op, left, right))

    def term(self) -> Lin:
        acc = self.product()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.take().text
            rhs = self.product()
            acc = acc + rhs if op == "+" else acc - rhs
        return acc

    def product(self) -> Lin:
        acc = self.signed()
        while self.tok.text == "*" and self.tok.kind == "op":
            t = self.take()
            rhs = self.signed()
            if acc.is_const:
                acc = rhs.scale(acc.const)
            elif rhs.is_const:
                acc = acc.scale(rhs.const)
            else:
                self.err("nonlinear multiplication", t)
        return acc

    def signed(self) -> Lin:
        if self.accept("-"):
            return -self.signed()
        t = self.tok
        if t.kind == "int":
            self.take()
            return Lin.num(int(t.text))
        if t.text == "(":
            self.take()
            e = self.term()
            self.expect(")")
            return e
        if t.kind == "ident" and t.text not in _KEYWORDS:
            self.take()
            return Lin.var(self.check_var(t))
        self.err(f"expected a term, found {t.text or 'end of input'!r}")

    def check_var(self, t: _Tok) -> str:
        name = t.text
        base = unprimed(name)
        if self.strict:
            if base in self.inputs:
                if is_primed(name):
                    self.err(f"input {base!r} cannot be primed", t)
            elif base not in self.pvars:
                self.err(f"undeclared variable {base!r}", t)
        return name


def _temporal_run(s: str) -> bool:
    return bool(s) and all(c in "GFX" for c in s)


def parse(text: str) -> Spec:
    """Parse a specification file."""
    return _Parser(text).spec()


def parse_formula(text: str, inputs: Optional[Iterable[str]] = None,
                  program_vars: Optional[Iterable[str]] = None) -> LTL:
    """Parse one temporal formula.  Without declarations any variable name is accepted."""
    p = _Parser(text, inputs, program_vars)
    f = p.formula()
    if p.tok.kind != "eof":
        p.err(f"unexpected {p.tok.text!r} after formula")
    return f


def parse_qf(text: str, inputs=None, program_vars=None) -> Formula:
    """Parse a first-order formula in the specification syntax."""
    return fm.canonicalize(to_qf(parse_formula(text, inputs, program_vars)))
