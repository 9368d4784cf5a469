"""Driver for an external SMT-LIB2 solver process.

One long-lived process per session; every query runs inside a push/pop scope
and is terminated by an ``(echo ...)`` marker so responses can be framed
without relying on ``:print-success``.  Results are cached on the
alpha-normalised canonical key of the query.
"""

from __future__ import annotations

import enum
import logging
import os
import selectors
import shlex
import subprocess
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

from .formula import (
    FALSE, TRUE, Formula, FormulaError, Lin, alpha_normalize, canonicalize,
    compare, conj, conj_all, disj, free_vars, negate, quant, smt_symbol, to_smt,
)

log = logging.getLogger(__name__)

MARKER = "<<rpmon-end>>"
ENV_SOLVER = "RPMON_SOLVER"


class SolverError(RuntimeError):
    """The solver process died, could not be started, or spoke nonsense."""


class Status(enum.Enum):
    SAT = "sat"
    UNSAT = "unsat"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class SmtVerdict:
    status: Status
    reason: str = ""

    @property
    def is_sat(self) -> bool:
        return self.status is Status.SAT

    @property
    def is_unsat(self) -> bool:
        return self.status is Status.UNSAT

    @property
    def is_unknown(self) -> bool:
        return self.status is Status.UNKNOWN


SAT = SmtVerdict(Status.SAT)
UNSAT = SmtVerdict(Status.UNSAT)


@dataclass(frozen=True)
class SolverConfig:
    executable: str = ""
    timeout_ms: int = 4000
    logic: str = "LIA"
    quant_multiplier: int = 5
    cache_size: int = 50000

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("solver timeout must be positive")

    def command(self) -> list[str]:
        exe = self.executable or os.environ.get(ENV_SOLVER) or "z3 -in"
        parts = shlex.split(exe)
        if len(parts) == 1 and os.path.basename(parts[0]).startswith("z3"):
            parts.append("-in")
        return parts


class QueryCache:
    """Bounded LRU map shared between sessions."""

    def __init__(self, size: int = 50000):
        self.size = size
        self._d: OrderedDict = OrderedDict()
        self.hits = 0
        self.misses = 0

    def get(self, key):
        try:
            val = self._d[key]
        except KeyError:
            self.misses += 1
            return None
        self._d.move_to_end(key)
        self.hits += 1
        return val

    def put(self, key, val):
        self._d[key] = val
        self._d.move_to_end(key)
        while len(self._d) > self.size:
            self._d.popitem(last=False)

    def __len__(self):
        return len(self._d)


def cache_key(kind: str, f: Formula) -> tuple:
    return (kind, alpha_normalize(f).key)


class SmtSession:
    def __init__(self, config: Optional[SolverConfig] = None, cache: Optional[QueryCache] = None):
        self.config = config or SolverConfig()
        self.cache = cache if cache is not None else QueryCache(self.config.cache_size)
        self._proc: Optional[subprocess.Popen] = None
        self._buf = b""
        self.calls = 0

    # -- process management -------------------------------------------------

    def _start(self):
        cmd = self.config.command()
        try:
            self._proc = subprocess.Popen(
                cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT, bufsize=0,
            )
        except OSError as e:
            raise SolverError(f"cannot start solver {cmd!r}: {e}") from e
        self._buf = b""
        self._write(f"(set-logic {self.config.logic})\n")

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.kill()
            self._proc.wait()
            self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):  # pragma: no cover - best effort
        try:
            self.close()
        except Exception:
            pass

    def _write(self, text: str):
        try:
            self._proc.stdin.write(text.encode())
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            self._proc = None
            raise SolverError(f"solver pipe closed: {e}") from e

    def _read_block(self, wall_s: float) -> Optional[list[str]]:
        """Lines up to the marker, or None on wall-clock timeout."""
        deadline = time.monotonic() + wall_s
        fd = self._proc.stdout
        sel = selectors.DefaultSelector()
        sel.register(fd, selectors.EVENT_READ)
        try:
            while True:
                idx = self._buf.find(MARKER.encode())
                if idx >= 0:
                    head = self._buf[:idx].decode(errors="replace")
                    self._buf = self._buf[idx + len(MARKER):].lstrip(b"\r\n")
                    return [ln for ln in head.splitlines() if ln.strip()]
                left = deadline - time.monotonic()
                if left <= 0:
                    return None
                if not sel.select(left):
                    continue
                chunk = os.read(fd.fileno(), 65536)
                if not chunk:
                    self._proc = None
                    raise SolverError("solver process exited unexpectedly")
                self._buf += chunk
        finally:
            sel.close()

    def _run(self, body: str, timeout_ms: int) -> list[str]:
        if self._proc is None:
            self._start()
        self.calls += 1
        script = (
            "(push 1)\n" + body
            + f'(echo "{MARKER}")\n(pop 1)\n'
        )
        self._write(script)
        lines = self._read_block(timeout_ms / 1000.0 * 2 + 2.0)
        if lines is None:
            log.warning("solver wall-clock timeout; restarting process")
            self.close()
            return ["timeout"]
        for ln in lines:
            if ln.startswith("(error"):
                raise SolverError(ln)
        return lines

    # -- queries ---------------------------------------------------------------

    def _declare(self, f: Formula) -> str:
        return "".join(f"(declare-const {smt_symbol(v)} Int)\n" for v in sorted(free_vars(f)))

    def _timeout_for(self, f: Formula) -> int:
        t = self.config.timeout_ms
        return t * self.config.quant_multiplier if _has_quant(f) else t

    def check_sat(self, f: Formula) -> SmtVerdict:
        f = canonicalize(f)
        if f == TRUE:
            return SAT
        if f == FALSE:
            return UNSAT
        key = cache_key("sat", f)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        t = self._timeout_for(f)
        body = (
            self._declare(f)
            + f"(assert {to_smt(f)})\n"
            + f"(set-option :timeout {t})\n(check-sat)\n"
        )
        lines = self._run(body, t)
        verdict = _parse_status(lines)
        if not verdict.is_unknown:
            self.cache.put(key, verdict)
        return verdict

    def entails(self, f: Formula, g: Formula) -> Optional[bool]:
        """True if f -> g is valid, False if not, None when the solver gave up."""
        v = self.check_sat(conj(f, negate(g)))
        if v.is_unsat:
            return True
        if v.is_sat:
            return False
        return None

    def valid(self, f: Formula) -> Optional[bool]:
        return self.entails(TRUE, f)

    def unsat(self, f: Formula) -> bool:
        """Definitely unsatisfiable (Unknown counts as no)."""
        return self.check_sat(f).is_unsat

    def qe(self, f: Formula, timeout_ms: Optional[int] = None) -> Optional[Formula]:
        """Quantifier-free equivalent of f over its free variables, or None."""
        f = canonicalize(f)
        if not _has_quant(f):
            return f
        key = cache_key("qe", f)
        hit = self.cache.get(key)
        if hit is not None:
            return hit[0]
        t = timeout_ms or self._timeout_for(f)
        body = (
            self._declare(f)
            + f"(assert {to_smt(f)})\n"
            + f"(set-option :timeout {t})\n(apply (then qe simplify))\n"
        )
        try:
            lines = self._run(body, t)
        except SolverError as e:
            if "canceled" not in str(e):
                raise
            lines = []  # tactic timeout: no answer
        result = None
        try:
            result = parse_goals("\n".join(lines))
        except (SexpError, FormulaError) as e:
            log.debug("qe result not representable: %s", e)
        if result is not None and _has_quant(result):
            result = None
        self.cache.put(key, (result,))
        return result

    def raw(self, script: str, timeout_ms: Optional[int] = None) -> list[str]:
        """Run an arbitrary script inside a scope; returns output lines."""
        return self._run(script, timeout_ms or self.config.timeout_ms)


def _has_quant(f: Formula) -> bool:
    from .formula import And, Not, Or, Quant
    if isinstance(f, Quant):
        return True
    if isinstance(f, Not):
        return _has_quant(f.arg)
    if isinstance(f, (And, Or)):
        return any(_has_quant(a) for a in f.args)
    return False


def _parse_status(lines: list[str]) -> SmtVerdict:
    for ln in lines:
        s = ln.strip()
        if s == "sat":
            return SAT
        if s == "unsat":
            return UNSAT
        if s == "unknown":
            return SmtVerdict(Status.UNKNOWN, "solver returned unknown")
        if s == "timeout":
            return SmtVerdict(Status.UNKNOWN, "timeout")
    return SmtVerdict(Status.UNKNOWN, "no answer: " + " | ".join(lines)[:200])


# ---------------------------------------------------------------------------
# s-expressions back into formulas


class SexpError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    out = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            out.append(c)
            i += 1
        elif c == "|":
            j = text.index("|", i + 1)
            out.append(text[i:j + 1])
            i = j + 1
        elif c == '"':
            j = text.index('"', i + 1)
            out.append(text[i:j + 1])
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "();":
                j += 1
            out.append(text[i:j])
            i = j
    return out


def parse_sexps(text: str) -> list:
    toks = tokenize(text)
    pos = 0

    def one():
        nonlocal pos
        if pos >= len(toks):
            raise SexpError("unexpected end of input")
        t = toks[pos]
        pos += 1
        if t == "(":
            items = []
            while True:
                if pos >= len(toks):
                    raise SexpError("unbalanced parenthesis")
                if toks[pos] == ")":
                    pos += 1
                    return items
                items.append(one())
        if t == ")":
            raise SexpError("unexpected ')'")
        return t

    out = []
    while pos < len(toks):
        out.append(one())
    return out


def _symbol_name(tok: str) -> str:
    return tok[1:-1] if tok.startswith("|") else tok


def sexp_to_formula(e, symbols=None, env=None) -> Formula:
    """Convert a parsed SMT-LIB term.  ``symbols`` maps solver symbols to variable names."""
    r = _conv(e, symbols or (lambda s: s), env or {})
    if isinstance(r, Lin):
        raise SexpError("expected a boolean term")
    return r


def _conv(e, sym, env):
    if isinstance(e, str):
        if e == "true":
            return TRUE
        if e == "false":
            return FALSE
        if e.lstrip("-").isdigit():
            return Lin.num(int(e))
        name = _symbol_name(e)
        if name in env:
            return env[name]
        return Lin.var(sym(name))
    if not e:
        raise SexpError("empty application")
    head, args = e[0], e[1:]
    if head == "let":
        env2 = dict(env)
        for binding in args[0]:
            env2[_symbol_name(binding[0])] = _conv(binding[1], sym, env)
        return _conv(args[1], sym, env2)
    if head in ("forall", "exists"):
        names = [_symbol_name(b[0]) for b in args[0]]
        env2 = {k: v for k, v in env.items() if k not in names}
        body = _conv(args[1], sym, env2)
        return quant(head, [sym(n) for n in names], canonicalize(body))
    vals = [_conv(a, sym, env) for a in args]
    if head == "not":
        return negate(vals[0])
    if head == "and":
        return conj(*vals)
    if head == "or":
        return disj(*vals)
    if head == "=>":
        return disj(negate(vals[0]), vals[1])
    if head in ("<=", "<", ">=", ">"):
        out = [compare(head, vals[i], vals[i + 1]) for i in range(len(vals) - 1)]
        return conj(*out)
    if head == "=":
        if all(isinstance(v, Lin) for v in vals):
            return conj(*(compare("=", vals[i], vals[i + 1]) for i in range(len(vals) - 1)))
        a, b = vals
        return disj(conj(a, b), conj(negate(a), negate(b)))
    if head == "distinct":
        if len(vals) != 2:
            raise SexpError("distinct with more than two arguments")
        return compare("!=", vals[0], vals[1])
    if head == "+":
        out = Lin()
        for v in vals:
            out = out + _lin(v)
        return out
    if head == "-":
        if len(vals) == 1:
            return -_lin(vals[0])
        out = _lin(vals[0])
        for v in vals[1:]:
            out = out - _lin(v)
        return out
    if head == "*":
        out = Lin.num(1)
        for v in vals:
            v = _lin(v)
            if out.is_const:
                out = v.scale(out.const)
            elif v.is_const:
                out = out.scale(v.const)
            else:
                raise SexpError("nonlinear product")
        return out
    raise SexpError(f"unsupported operator {head!r}")


def _lin(v) -> Lin:
    if not isinstance(v, Lin):
        raise SexpError("expected an integer term")
    return v


def parse_goals(text: str) -> Formula:
    """Conjunction of all formulas in a z3 ``(goals (goal ...))`` answer."""
    exprs = parse_sexps(text)
    for e in exprs:
        if isinstance(e, list) and e and e[0] == "goals":
            parts = []
            for goal in e[1:]:
                if not (isinstance(goal, list) and goal and goal[0] == "goal"):
                    continue
                items = []
                it = iter(goal[1:])
                for item in it:
                    if isinstance(item, str) and item.startswith(":"):
                        next(it, None)
                        continue
                    items.append(sexp_to_formula(item))
                parts.append(conj_all(items))
            return disj(*parts) if parts else FALSE
    raise SexpError("no goals in solver output")
