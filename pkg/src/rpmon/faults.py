"""Deliberately broken rule variants, used to check that the oracles notice.

Nothing here is reachable in normal operation; ``verify --inject-fault``
swaps one rule implementation for the duration of a build.
"""

from __future__ import annotations

import contextlib
from typing import Iterator, Optional

from . import rules
from .rules import RuleId, TT, qf_candidates, substitute_everywhere


def _subst_unchecked(q, d, res):
    """SubstTrue without the entailment check: replaces the largest first-order part by true."""
    if d != "G" or q.guarantee_false or not q.fg:
        return None
    for g in qf_candidates(q.fg):
        new = substitute_everywhere(q.fg, g, TT)
        if new != q.fg:
            return q.replace("G", f=new)
    return None


def _unsat_unchecked(q, d, res):
    """Unsat on the guarantee side whenever any current obligation exists."""
    if d != "G" or q.guarantee_false or not q.eg:
        return None
    return rules._kill(q, d)


FAULTS = {
    "subst-unchecked": (RuleId.SUBST_TRUE, _subst_unchecked),
    "unsat-unchecked": (RuleId.UNSAT, _unsat_unchecked),
}


@contextlib.contextmanager
def injected(name: Optional[str]) -> Iterator[None]:
    """Temporarily replace one rule by its broken variant (no-op for None)."""
    if name is None:
        yield
        return
    if name not in FAULTS:
        raise KeyError(f"unknown fault {name!r}; known: {', '.join(sorted(FAULTS))}")
    rid, fn = FAULTS[name]
    saved = rules.RULES[rid]
    rules.RULES[rid] = fn
    try:
        yield
    finally:
        rules.RULES[rid] = saved
