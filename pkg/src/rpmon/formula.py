"""First-order formulas over program variables, inputs and their primed copies.

Only linear integer arithmetic is supported.  Every comparison is normalised
into one of two atom shapes, ``sum(c_i * v_i) <= k`` or ``sum(c_i * v_i) = k``
with a positive leading coefficient, possibly under a negation.  ``x > 0``,
``0 < x`` and ``x >= 1`` therefore all end up as the same literal, which is
what the rest of the package relies on for deduplication.

Primed variables are ordinary names with a trailing apostrophe (``x'``).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property
from math import gcd
from typing import Iterable, Mapping, Union

PRIME = "'"

Valuation = dict  # name -> int


class FormulaError(ValueError):
    pass


def is_primed(name: str) -> bool:
    return name.endswith(PRIME)


def primed(name: str) -> str:
    return name + PRIME


def unprimed(name: str) -> str:
    return name[:-1] if name.endswith(PRIME) else name


# ---------------------------------------------------------------------------
# linear terms


@dataclass(frozen=True)
class Lin:
    """sum(coeff * var) + const, with coefficients sorted by variable name."""

    coeffs: tuple = ()
    const: int = 0

    @staticmethod
    def var(name: str) -> "Lin":
        return Lin(((name, 1),), 0)

    @staticmethod
    def num(k: int) -> "Lin":
        return Lin((), int(k))

    @staticmethod
    def from_dict(d: Mapping[str, int], const: int = 0) -> "Lin":
        return Lin(tuple(sorted((v, c) for v, c in d.items() if c != 0)), const)

    @staticmethod
    def coerce(t) -> "Lin":
        if isinstance(t, Lin):
            return t
        if isinstance(t, bool):
            raise FormulaError("boolean used as a term")
        if isinstance(t, int):
            return Lin.num(t)
        if isinstance(t, str):
            return Lin.var(t)
        raise FormulaError(f"cannot use {t!r} as a linear term")

    def as_dict(self) -> dict:
        return dict(self.coeffs)

    def __add__(self, other: "Lin") -> "Lin":
        d = self.as_dict()
        for v, c in other.coeffs:
            d[v] = d.get(v, 0) + c
        return Lin.from_dict(d, self.const + other.const)

    def __neg__(self) -> "Lin":
        return self.scale(-1)

    def __sub__(self, other: "Lin") -> "Lin":
        return self + (-other)

    def scale(self, k: int) -> "Lin":
        if k == 0:
            return Lin()
        return Lin(tuple((v, c * k) for v, c in self.coeffs), self.const * k)

    @property
    def is_const(self) -> bool:
        return not self.coeffs

    def vars(self) -> frozenset:
        return frozenset(v for v, _ in self.coeffs)

    def evaluate(self, env: Mapping[str, int]) -> int:
        total = self.const
        for v, c in self.coeffs:
            try:
                total += c * env[v]
            except KeyError:
                raise FormulaError(f"no value for variable {v}") from None
        return total

    def substitute(self, m: Mapping[str, "Lin"]) -> "Lin":
        out = Lin.num(self.const)
        for v, c in self.coeffs:
            out = out + (m[v].scale(c) if v in m else Lin(((v, c),), 0))
        return out

    def pretty(self) -> str:
        return _pretty_sum(self.coeffs, self.const)


def _pretty_sum(coeffs, const) -> str:
    parts = []
    for v, c in coeffs:
        mag = abs(c)
        body = v if mag == 1 else f"{mag}*{v}"
        if not parts:
            parts.append(body if c > 0 else f"-{body}")
        else:
            parts.append(f"+ {body}" if c > 0 else f"- {body}")
    if const or not parts:
        if not parts:
            parts.append(str(const))
        else:
            parts.append(f"+ {const}" if const > 0 else f"- {-const}")
    return " ".join(parts)


# ---------------------------------------------------------------------------
# formula nodes


class Formula:
    """Base class; subclasses are frozen dataclasses."""

    @cached_property
    def key(self) -> str:
        return self._key()

    @cached_property
    def digest(self) -> str:
        return hashlib.sha256(self.key.encode()).hexdigest()[:16]

    def _key(self) -> str:  # pragma: no cover - abstract
        raise NotImplementedError

    def __str__(self) -> str:
        return pretty(self)

    # convenience operators, all canonicalising
    def __and__(self, other: "Formula") -> "Formula":
        return conj(self, other)

    def __or__(self, other: "Formula") -> "Formula":
        return disj(self, other)

    def __invert__(self) -> "Formula":
        return negate(self)


@dataclass(frozen=True)
class BoolConst(Formula):
    value: bool

    def _key(self):
        return "true" if self.value else "false"


TRUE = BoolConst(True)
FALSE = BoolConst(False)


@dataclass(frozen=True)
class Atom(Formula):
    """Canonical atom: sum(coeffs) <op> bound with op in {'<=', '='}."""

    op: str
    coeffs: tuple
    bound: int

    def _key(self):
        body = " ".join(f"{c}*{v}" for v, c in self.coeffs)
        return f"({self.op} {body} {self.bound})"

    def lhs(self) -> Lin:
        return Lin(self.coeffs, 0)


@dataclass(frozen=True)
class Compare(Formula):
    """Raw comparison as written by a user; canonicalize() turns it into a literal."""

    op: str
    left: Lin
    right: Lin

    def _key(self):
        return f"(cmp {self.op} {self.left} {self.right})"


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula

    def _key(self):
        return f"(not {self.arg.key})"


@dataclass(frozen=True)
class And(Formula):
    args: tuple

    def _key(self):
        return "(and " + " ".join(a.key for a in self.args) + ")"


@dataclass(frozen=True)
class Or(Formula):
    args: tuple

    def _key(self):
        return "(or " + " ".join(a.key for a in self.args) + ")"


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula

    def _key(self):
        return f"(=> {self.left.key} {self.right.key})"


@dataclass(frozen=True)
class Quant(Formula):
    kind: str  # 'forall' | 'exists'
    vars: tuple
    body: Formula

    def _key(self):
        return f"({self.kind} ({' '.join(self.vars)}) {self.body.key})"


COMPARISON_OPS = ("<", "<=", "=", ">=", ">", "!=")


def compare(op: str, left, right) -> Formula:
    """Build the canonical literal for ``left op right``."""
    if op not in COMPARISON_OPS:
        raise FormulaError(f"unknown comparison {op!r}")
    return make_literal(op, Lin.coerce(left) - Lin.coerce(right))


def make_literal(op: str, lin: Lin) -> Formula:
    """Canonical literal for ``lin op 0``."""
    coeffs = lin.coeffs
    k = -lin.const
    if op == "<":
        return _le(coeffs, k - 1)
    if op == "<=":
        return _le(coeffs, k)
    if op == ">":
        return negate_literal(_le(coeffs, k))
    if op == ">=":
        return negate_literal(_le(coeffs, k - 1))
    if op == "=":
        return _eq(coeffs, k)
    if op == "!=":
        return negate_literal(_eq(coeffs, k))
    raise FormulaError(f"unknown comparison {op!r}")


def _le(coeffs, k) -> Formula:
    if not coeffs:
        return TRUE if 0 <= k else FALSE
    g = 0
    for _, c in coeffs:
        g = gcd(g, abs(c))
    coeffs = tuple((v, c // g) for v, c in coeffs)
    k = k // g  # floor division is exact for integer-valued left sides
    if coeffs[0][1] < 0:
        # sum <= k  <=>  not(-sum <= -k-1)
        return Not(Atom("<=", tuple((v, -c) for v, c in coeffs), -k - 1))
    return Atom("<=", coeffs, k)


def _eq(coeffs, k) -> Formula:
    if not coeffs:
        return TRUE if k == 0 else FALSE
    g = 0
    for _, c in coeffs:
        g = gcd(g, abs(c))
    if k % g:
        return FALSE
    coeffs = tuple((v, c // g) for v, c in coeffs)
    k //= g
    if coeffs[0][1] < 0:
        coeffs = tuple((v, -c) for v, c in coeffs)
        k = -k
    return Atom("=", coeffs, k)


def negate_literal(f: Formula) -> Formula:
    if isinstance(f, BoolConst):
        return FALSE if f.value else TRUE
    if isinstance(f, Not):
        return f.arg
    return Not(f)


def is_literal(f: Formula) -> bool:
    return isinstance(f, Atom) or (isinstance(f, Not) and isinstance(f.arg, Atom))


def literal_atom(f: Formula) -> tuple[Atom, bool]:
    if isinstance(f, Atom):
        return f, True
    if isinstance(f, Not) and isinstance(f.arg, Atom):
        return f.arg, False
    raise FormulaError(f"not a literal: {f}")


# ---------------------------------------------------------------------------
# canonical form


def conj(*args: Formula) -> Formula:
    return _junction(And, args)


def disj(*args: Formula) -> Formula:
    return _junction(Or, args)


def conj_all(args: Iterable[Formula]) -> Formula:
    return _junction(And, tuple(args))


def disj_all(args: Iterable[Formula]) -> Formula:
    return _junction(Or, tuple(args))


def _junction(cls, args) -> Formula:
    unit, zero = (TRUE, FALSE) if cls is And else (FALSE, TRUE)
    flat: dict[str, Formula] = {}
    stack = list(args)
    stack.reverse()
    while stack:
        a = stack.pop()
        if not _is_canonical_node(a):
            a = canonicalize(a)
        if isinstance(a, cls):
            stack.extend(reversed(a.args))
            continue
        if a == unit:
            continue
        if a == zero:
            return zero
        flat.setdefault(a.key, a)
    for a in flat.values():
        if is_literal(a) and negate_literal(a).key in flat:
            return zero
    if not flat:
        return unit
    if len(flat) == 1:
        return next(iter(flat.values()))
    return cls(tuple(flat[k] for k in sorted(flat)))


def _is_canonical_node(f: Formula) -> bool:
    # cheap structural test; children produced by conj/disj are canonical already
    if isinstance(f, (BoolConst, And, Or, Quant)):
        return True
    if isinstance(f, Atom):
        return True
    if isinstance(f, Not):
        return isinstance(f.arg, Atom)
    return False


def negate(f: Formula) -> Formula:
    return _nnf(f, False)


def canonicalize(f: Formula) -> Formula:
    """Negation normal form with sorted, flattened, de-duplicated connectives.

    Idempotent: canonicalize(canonicalize(f)) == canonicalize(f).
    """
    return _nnf(f, True)


def _nnf(f: Formula, pos: bool) -> Formula:
    if isinstance(f, BoolConst):
        return f if pos else (FALSE if f.value else TRUE)
    if isinstance(f, Atom):
        lit = make_literal(f.op, Lin(f.coeffs, -f.bound))
        return lit if pos else negate_literal(lit)
    if isinstance(f, Compare):
        lit = make_literal(f.op, f.left - f.right)
        return lit if pos else negate_literal(lit)
    if isinstance(f, Not):
        return _nnf(f.arg, not pos)
    if isinstance(f, And):
        parts = tuple(_nnf(a, pos) for a in f.args)
        return conj(*parts) if pos else disj(*parts)
    if isinstance(f, Or):
        parts = tuple(_nnf(a, pos) for a in f.args)
        return disj(*parts) if pos else conj(*parts)
    if isinstance(f, Implies):
        parts = (_nnf(f.left, not pos), _nnf(f.right, pos))
        return disj(*parts) if pos else conj(*parts)
    if isinstance(f, Quant):
        kind = f.kind if pos else ("exists" if f.kind == "forall" else "forall")
        return quant(kind, f.vars, _nnf(f.body, pos))
    raise FormulaError(f"unknown formula node {type(f).__name__}")


def quant(kind: str, names: Iterable[str], body: Formula) -> Formula:
    if kind not in ("forall", "exists"):
        raise FormulaError(f"bad quantifier {kind!r}")
    fv = free_vars(body)
    keep = tuple(sorted(set(n for n in names if n in fv)))
    if not keep:
        return body
    if isinstance(body, Quant) and body.kind == kind:
        return quant(kind, keep + body.vars, body.body)
    return Quant(kind, keep, body)


def forall(names, body):
    return quant("forall", names, canonicalize(body))


def exists(names, body):
    return quant("exists", names, canonicalize(body))


# ---------------------------------------------------------------------------
# queries


def free_vars(f: Formula) -> frozenset:
    if isinstance(f, BoolConst):
        return frozenset()
    if isinstance(f, Atom):
        return frozenset(v for v, _ in f.coeffs)
    if isinstance(f, Compare):
        return f.left.vars() | f.right.vars()
    if isinstance(f, Not):
        return free_vars(f.arg)
    if isinstance(f, (And, Or)):
        out = frozenset()
        for a in f.args:
            out |= free_vars(a)
        return out
    if isinstance(f, Implies):
        return free_vars(f.left) | free_vars(f.right)
    if isinstance(f, Quant):
        return free_vars(f.body) - frozenset(f.vars)
    raise FormulaError(f"unknown formula node {type(f).__name__}")


def atoms(f: Formula) -> frozenset:
    """Canonical atoms occurring in f (polarity stripped)."""
    f = canonicalize(f)
    out = set()

    def walk(g):
        if isinstance(g, Atom):
            out.add(g)
        elif isinstance(g, Not):
            walk(g.arg)
        elif isinstance(g, (And, Or)):
            for a in g.args:
                walk(a)
        elif isinstance(g, Quant):
            walk(g.body)

    walk(f)
    return frozenset(out)


def is_quantifier_free(f: Formula) -> bool:
    if isinstance(f, Quant):
        return False
    if isinstance(f, Not):
        return is_quantifier_free(f.arg)
    if isinstance(f, (And, Or)):
        return all(is_quantifier_free(a) for a in f.args)
    if isinstance(f, Implies):
        return is_quantifier_free(f.left) and is_quantifier_free(f.right)
    return True


def evaluate(f: Formula, env: Mapping[str, int]) -> bool:
    if isinstance(f, BoolConst):
        return f.value
    if isinstance(f, Atom):
        val = Lin(f.coeffs, 0).evaluate(env)
        return val <= f.bound if f.op == "<=" else val == f.bound
    if isinstance(f, Compare):
        a, b = f.left.evaluate(env), f.right.evaluate(env)
        return {
            "<": a < b, "<=": a <= b, "=": a == b,
            ">=": a >= b, ">": a > b, "!=": a != b,
        }[f.op]
    if isinstance(f, Not):
        return not evaluate(f.arg, env)
    if isinstance(f, And):
        return all(evaluate(a, env) for a in f.args)
    if isinstance(f, Or):
        return any(evaluate(a, env) for a in f.args)
    if isinstance(f, Implies):
        return (not evaluate(f.left, env)) or evaluate(f.right, env)
    raise FormulaError("cannot evaluate quantified formulas concretely")


# ---------------------------------------------------------------------------
# substitution

def _fresh(base: str, avoid: set) -> str:
    i = 0
    while True:
        cand = f"{unprimed(base)}#{i}"
        if cand not in avoid:
            return cand
        i += 1


def substitute(f: Formula, m: Mapping[str, object]) -> Formula:
    """Simultaneous, capture-avoiding substitution of variables by linear terms."""
    lm = {k: Lin.coerce(v) for k, v in m.items()}
    if not lm:
        return f
    return _subst(f, lm)


def _subst(f: Formula, m: Mapping[str, Lin]) -> Formula:
    if isinstance(f, BoolConst):
        return f
    if isinstance(f, Atom):
        return make_literal(f.op, Lin(f.coeffs, -f.bound).substitute(m))
    if isinstance(f, Compare):
        return Compare(f.op, f.left.substitute(m), f.right.substitute(m))
    if isinstance(f, Not):
        inner = _subst(f.arg, m)
        return negate_literal(inner) if is_literal(inner) or isinstance(inner, BoolConst) else Not(inner)
    if isinstance(f, And):
        return And(tuple(_subst(a, m) for a in f.args))
    if isinstance(f, Or):
        return Or(tuple(_subst(a, m) for a in f.args))
    if isinstance(f, Implies):
        return Implies(_subst(f.left, m), _subst(f.right, m))
    if isinstance(f, Quant):
        inner = {k: v for k, v in m.items() if k not in f.vars}
        if not inner:
            return f
        incoming = set()
        for v in inner.values():
            incoming |= v.vars()
        avoid = incoming | set(free_vars(f.body)) | set(inner)
        names, renames = [], {}
        for b in f.vars:
            if b in incoming:
                nb = _fresh(b, avoid)
                avoid.add(nb)
                renames[b] = Lin.var(nb)
                names.append(nb)
            else:
                names.append(b)
        body = _subst(f.body, renames) if renames else f.body
        return quant(f.kind, names, _subst(body, inner))
    raise FormulaError(f"unknown formula node {type(f).__name__}")


def rename(f: Formula, mapping: Mapping[str, str]) -> Formula:
    return canonicalize(substitute(f, {k: Lin.var(v) for k, v in mapping.items()}))


def prime(f: Formula, inputs: Iterable[str] = ()) -> Formula:
    """Replace every program variable x by x'.

    Raises if f already mentions a primed variable or an input.
    """
    ins = set(inputs)
    fv = free_vars(f)
    bad = sorted(v for v in fv if is_primed(v) or v in ins)
    if bad:
        raise FormulaError(f"prime() expects a state formula, got variables {bad}")
    return rename(f, {v: primed(v) for v in fv})


def unprime(f: Formula) -> Formula:
    fv = free_vars(f)
    return rename(f, {v: unprimed(v) for v in fv if is_primed(v)})


def alpha_normalize(f: Formula) -> Formula:
    """Rename bound variables to positional names so alpha-equivalent formulas coincide."""
    counter = [0]

    def walk(g, env):
        if isinstance(g, Quant):
            names = []
            env2 = dict(env)
            for v in g.vars:
                nv = f"%{counter[0]}"
                counter[0] += 1
                env2[v] = Lin.var(nv)
                names.append(nv)
            # re-canonicalise so junction order no longer depends on the old names
            body = walk(canonicalize(_subst(g.body, env2)), {})
            return Quant(g.kind, tuple(names), body)
        if isinstance(g, (And, Or)):
            return type(g)(tuple(walk(a, env) for a in g.args))
        if isinstance(g, Not):
            return Not(walk(g.arg, env))
        return g

    return walk(canonicalize(f), {})


# ---------------------------------------------------------------------------
# rendering


def pretty(f: Formula) -> str:
    if isinstance(f, BoolConst):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        return _pretty_atom(f, f.op)
    if isinstance(f, Compare):
        return f"{f.left.pretty()} {f.op} {f.right.pretty()}"
    if isinstance(f, Not):
        if isinstance(f.arg, Atom):
            return _pretty_atom(f.arg, ">" if f.arg.op == "<=" else "!=")
        return f"!({pretty(f.arg)})"
    if isinstance(f, And):
        return " && ".join(_paren(a, Or) for a in f.args)
    if isinstance(f, Or):
        return " || ".join(_paren(a, And) for a in f.args)
    if isinstance(f, Implies):
        return f"({pretty(f.left)}) -> ({pretty(f.right)})"
    if isinstance(f, Quant):
        return f"{f.kind} {' '.join(f.vars)}. ({pretty(f.body)})"
    raise FormulaError(f"unknown formula node {type(f).__name__}")


_FLIP = {"<=": ">=", ">": "<", "=": "=", "!=": "!="}


def _pretty_atom(a: Atom, op: str) -> str:
    """Solve for a pivot variable (first primed one, else first) with positive sign."""
    pivot = next((v for v, _ in a.coeffs if is_primed(v)), a.coeffs[0][0])
    sign = 1 if dict(a.coeffs)[pivot] > 0 else -1
    if sign < 0:
        op = _FLIP[op]
    lhs = [(v, c * sign) for v, c in a.coeffs if v == pivot]
    rhs = [(v, -c * sign) for v, c in a.coeffs if v != pivot]
    bound = a.bound * sign
    if op == "<":
        op, bound = "<=", bound - 1
    return f"{_pretty_sum(lhs, 0)} {op} {_pretty_sum(rhs, bound)}"


def _paren(f, needs):
    s = pretty(f)
    return f"({s})" if isinstance(f, (needs, Quant, Implies)) else s


def smt_symbol(name: str) -> str:
    return f"|{name}|"


def _smt_int(k: int) -> str:
    return str(k) if k >= 0 else f"(- {-k})"


def smt_term(lin: Lin, sym=smt_symbol) -> str:
    parts = []
    for v, c in lin.coeffs:
        parts.append(sym(v) if c == 1 else f"(* {_smt_int(c)} {sym(v)})")
    if lin.const or not parts:
        parts.append(_smt_int(lin.const))
    return parts[0] if len(parts) == 1 else "(+ " + " ".join(parts) + ")"


def to_smt(f: Formula, sym=smt_symbol) -> str:
    """SMT-LIB2 term for f; ``sym`` maps variable names to SMT symbols."""
    if isinstance(f, BoolConst):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        return f"({f.op} {smt_term(Lin(f.coeffs, 0), sym)} {_smt_int(f.bound)})"
    if isinstance(f, Compare):
        a, b = smt_term(f.left, sym), smt_term(f.right, sym)
        if f.op == "!=":
            return f"(not (= {a} {b}))"
        return f"({f.op} {a} {b})"
    if isinstance(f, Not):
        return f"(not {to_smt(f.arg, sym)})"
    if isinstance(f, And):
        return "(and " + " ".join(to_smt(a, sym) for a in f.args) + ")"
    if isinstance(f, Or):
        return "(or " + " ".join(to_smt(a, sym) for a in f.args) + ")"
    if isinstance(f, Implies):
        return f"(=> {to_smt(f.left, sym)} {to_smt(f.right, sym)})"
    if isinstance(f, Quant):
        binders = " ".join(f"({sym(v)} Int)" for v in f.vars)
        return f"({f.kind} ({binders}) {to_smt(f.body, sym)})"
    raise FormulaError(f"unknown formula node {type(f).__name__}")


Term = Union[Lin, int, str]
