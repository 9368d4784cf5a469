"""Command-line entry point: ``rpmon check|monitor|product|verify``.

Exit codes: 0 success, 1 oracle or property failure, 2 usage or input error
(including an exhausted state cap), 3 failure of an external tool (SMT
solver or LTL translator).
"""

from __future__ import annotations

import functools
import logging
import shlex
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import click

from . import formula as fm
from . import game as gm
from . import monitor as mon
from . import oracles as orc
from . import rpltl as lt
from .expansion import PredicateTable
from .faults import FAULTS, injected
from .fixpoint import FixpointBudget
from .game import OPEN, SAFETY, UNSAT
from .rules import RuleConfig
from .smt import SmtSession, SolverConfig, SolverError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_TOOL = 0, 1, 2, 3
ENV = "RPMON_"

log = logging.getLogger("rpmon")


class CliError(click.ClickException):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.exit_code = code


@dataclass
class RunConfig:
    solver: str = ""
    translator: Optional[str] = None
    hoa: Optional[Path] = None
    max_states: int = 5000
    fixpoint_iters: int = 25
    gen_inv_p: bool = False
    chc: Optional[str] = None
    box: int = 2
    seed: int = 0
    samples: int = 400
    fmt: Optional[str] = None
    debug_soundness: bool = False
    fault: Optional[str] = None
    output: Optional[Path] = None
    extra: dict = field(default_factory=dict)

    def build_config(self, discharge_gf: bool = True) -> mon.BuildConfig:
        rules = RuleConfig(gen_inv_p=self.gen_inv_p, chc_command=self.chc,
                           budget=FixpointBudget(max_iterations=self.fixpoint_iters))
        return mon.BuildConfig(max_states=self.max_states, rules=rules, discharge_gf=discharge_gf)

    def session(self) -> SmtSession:
        return SmtSession(SolverConfig(executable=self.solver))


# ---------------------------------------------------------------------------
# option plumbing


def _opt(*names, **kw):
    """click.option with the environment variable named after the long flag."""
    long = next(n for n in names if n.startswith("--"))
    kw.setdefault("envvar", ENV + long[2:].upper().replace("-", "_"))
    kw.setdefault("show_envvar", True)
    return click.option(*names, **kw)


def build_options(f):
    opts = [
        _opt("--solver", default="", metavar="CMD", help="SMT solver command (SMT-LIB2 over stdin); default z3 -in."),
        _opt("--max-states", type=click.IntRange(min=1), default=5000, show_default=True,
             help="Monitor state cap."),
        _opt("--fixpoint-iters", type=click.IntRange(min=1), default=25, show_default=True,
             help="Iteration budget of the fixpoint engine."),
        _opt("--enable-gen-inv-p", "gen_inv_p", is_flag=True, help="Enable the reachable-set invariant rule."),
        _opt("--chc", default=None, metavar="CMD", help="External Horn-clause solver used for invariant candidates."),
        _opt("--debug-soundness", is_flag=True, help="Audit every rule application on sampled lassos."),
        _opt("--box", type=click.IntRange(min=0), default=2, show_default=True,
             help="Value radius of sampled lassos."),
        _opt("--seed", type=int, default=0, show_default=True, help="Seed for lasso sampling."),
        click.option("-v", "--verbose", count=True, help="Log progress (-vv for solver-level detail)."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def automaton_options(f):
    f = _opt("--translator", default=None, metavar="CMD",
             help="LTL-to-HOA translator; called with the Booleanized formula as last argument.")(f)
    f = _opt("--hoa", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None,
             help="Deterministic parity automaton for the Booleanized formula.")(f)
    return f


def _config(kw) -> RunConfig:
    cfg = RunConfig()
    for k, v in kw.items():
        if k == "format":
            cfg.fmt = v
        elif hasattr(cfg, k):
            setattr(cfg, k, v)
        else:
            cfg.extra[k] = v
    return cfg


def _setup_logging(verbose: int) -> None:
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _load_spec(path: Path) -> lt.Spec:
    try:
        text = path.read_text()
    except OSError as e:
        raise CliError(f"{path}: {e.strerror}", EXIT_USAGE) from None
    try:
        return lt.parse(text)
    except lt.ParseError as e:
        raise CliError(f"{path}:{e}", EXIT_USAGE) from None


def _guarded(fn):
    """Map library failures onto the exit-code contract."""
    @functools.wraps(fn)
    def run(*a, **kw):
        try:
            return fn(*a, **kw)
        except mon.StateCapExceeded as e:
            raise CliError(f"{e}; raise --max-states", EXIT_USAGE) from None
        except SolverError as e:
            raise CliError(f"solver failure: {e}", EXIT_TOOL) from None
        except (gm.HoaError, gm.GameError) as e:
            raise CliError(f"automaton: {e}", EXIT_USAGE) from None
    return run


def _write(cfg: RunConfig, text: str) -> None:
    if cfg.output is None:
        return
    if str(cfg.output) == "-":
        click.echo(text, nl=False)
    else:
        cfg.output.write_text(text)
        click.echo(f"wrote {cfg.output}")


# ---------------------------------------------------------------------------
# shared steps


def build_monitor(spec: lt.Spec, cfg: RunConfig, smt: SmtSession, discharge_gf: bool = True,
                  auditor=None) -> mon.Monitor:
    with injected(cfg.fault):
        return mon.build(spec, cfg.build_config(discharge_gf), smt=smt, auditor=auditor)


def soundness_auditor(spec: lt.Spec, cfg: RunConfig) -> orc.SoundnessAuditor:
    phi = spec.formula()
    box = orc.LassoBox(radius=cfg.box, extra_values=tuple(sorted(orc.spec_constants([phi]))))
    return orc.SoundnessAuditor(sorted(set(spec.inputs) | set(spec.program_vars)), box, seed=cfg.seed)


def run_translator(command: str, formula: str, timeout_s: float = 120.0) -> str:
    argv = shlex.split(command) + [formula]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout_s)
    except FileNotFoundError:
        raise CliError(f"translator not found: {argv[0]}", EXIT_TOOL) from None
    except subprocess.TimeoutExpired:
        raise CliError(f"translator timed out after {timeout_s:.0f}s", EXIT_TOOL) from None
    if proc.returncode != 0 or "HOA:" not in proc.stdout:
        detail = proc.stderr.strip().splitlines()[-1:] or ["no HOA on stdout"]
        raise CliError(f"translator failed (exit {proc.returncode}): {detail[0]}", EXIT_TOOL)
    return proc.stdout


def load_game(spec: lt.Spec, cfg: RunConfig) -> gm.SymbolicGame:
    """Game structure from --hoa, or from the translator applied to the Booleanized formula."""
    text, props = lt.booleanize(spec.formula())
    if cfg.hoa is not None:
        hoa = cfg.hoa.read_text()
    elif cfg.translator:
        log.info("translating %s", text)
        hoa = run_translator(cfg.translator, text)
    else:
        raise CliError("an automaton source is required: --hoa FILE or --translator CMD", EXIT_USAGE)
    dpa = gm.parse_hoa(hoa)
    atoms = gm.atom_map_for(dpa.aps, props, spec.inputs, spec.program_vars)
    return gm.game_from_dpa(dpa, atoms, spec.inputs, spec.program_vars)


def unsat_bound(m: mon.Monitor) -> bool:
    """Every first step either violates the assumptions or leads to UNSAT."""
    if m.verdicts[m.init] == UNSAT:
        return True
    succ = m.successors(m.init)
    return bool(succ) and all(m.verdicts[j] == UNSAT or m.states[j].assumption_false for j in succ)


def _count(n: int, noun: str) -> str:
    return f"{n} {noun}{'' if n == 1 else 's'}"


def monitor_summary(m: mon.Monitor) -> list:
    reach = sorted(m.reachable(m.init))
    counts = {v: sum(1 for i in reach if m.verdicts[i] == v) for v in (UNSAT, SAFETY, OPEN)}
    n_gf = m.stats.get("gf_discharged", 0)
    lines = [
        f"monitor: {_count(len(m.states), 'state')}, {_count(m.stats.get('transitions', 0), 'transition')}",
        "reachable verdicts: " + ", ".join(f"{v} {counts[v]}" for v in counts),
        f"GF discharged: {n_gf} obligation{'' if n_gf == 1 else 's'}",
    ]
    live = [i for i in reach if m.verdicts[i] != UNSAT]
    if live and all(m.verdicts[i] == SAFETY for i in live):
        lines.append("all states SAFETY" + (" (besides the UNSAT sink)" if counts[UNSAT] else ""))
    lines.append(f"initial obligations UNSAT-bound: {'yes' if unsat_bound(m) else 'no'}")
    return lines


def product_summary(g: gm.SymbolicGame, p: gm.SymbolicGame) -> list:
    reach = sorted(p.reachable())
    n_safe = sum(1 for l in reach if p.verdict_of(l) == SAFETY)
    n_unsat = sum(1 for l in reach if p.verdict_of(l) == UNSAT)
    kind = gm.winning_summary(p)
    if kind == "safety":
        cond = "safety on all reachable locations"
    elif kind == "unsat":
        cond = "environment wins from the initial location"
    elif kind == "parity":
        cond = "parity (max-even) on all reachable locations"
    else:
        cond = f"safety on {n_safe} of {len(reach) - n_unsat} live locations, parity elsewhere"
    return [
        f"game: {len(g.reachable())} reachable locations; product: {len(reach)} reachable locations",
        f"SAFETY locations: {n_safe}; UNSAT locations: {n_unsat}",
        f"winning condition: {cond}",
        f"UNSAT sink reachable: {'yes' if n_unsat else 'no'}",
    ]


# ---------------------------------------------------------------------------
# commands


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(package_name="artifact", prog_name="rpmon")
def main():
    """Monitors and monitor-augmented synthesis games for first-order temporal specifications."""


@main.command("check")
@click.argument("spec", type=click.Path(dir_okay=False, path_type=Path))
def cmd_check(spec: Path):
    """Parse and sort-check SPEC; list its atoms and propagation predicates."""
    s = _load_spec(spec)
    phi = s.formula()
    table = PredicateTable.from_formulas([phi], s.inputs)
    atoms = [p for p, k in zip(table.preds, table.kinds) if k == "atom"]
    click.echo(f"OK, {len(atoms)} atoms, {len(table.prop_preds)} PropPreds")
    click.echo(f"inputs: {' '.join(s.inputs) or '-'}")
    click.echo(f"vars: {' '.join(s.program_vars) or '-'}")
    click.echo(f"assumptions: {len(s.assumptions)}; guarantees: {len(s.guarantees)}")
    for a in atoms:
        click.echo(f"  atom  {fm.pretty(a)}")
    for p in table.prop_preds:
        click.echo(f"  prop  {fm.pretty(p)}")


@main.command("monitor")
@click.argument("spec", type=click.Path(dir_okay=False, path_type=Path))
@build_options
@_opt("--format", type=click.Choice(["json", "dot"]), default="json", show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Write the monitor here ('-' for stdout).")
@_guarded
def cmd_monitor(spec: Path, verbose: int, **kw):
    """Build the monitor of SPEC and report its verdicts."""
    _setup_logging(verbose)
    cfg = _config(kw)
    s = _load_spec(spec)
    auditor = soundness_auditor(s, cfg) if cfg.debug_soundness else None
    with cfg.session() as smt:
        m = build_monitor(s, cfg, smt, auditor=auditor)
    for line in monitor_summary(m):
        click.echo(line)
    if auditor is not None:
        res = auditor.result()
        click.echo(res.line())
        if not res.ok:
            raise CliError("rule soundness audit failed", EXIT_FAIL)
    _write(cfg, mon.export(m, cfg.fmt))


@main.command("product")
@click.argument("spec", type=click.Path(dir_okay=False, path_type=Path))
@automaton_options
@build_options
@_opt("--format", type=click.Choice(["game", "json", "dot"]), default="game", show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Write the product game here ('-' for stdout).")
@_guarded
def cmd_product(spec: Path, verbose: int, **kw):
    """Build the game for SPEC from a parity automaton and its product with the monitor."""
    _setup_logging(verbose)
    cfg = _config(kw)
    s = _load_spec(spec)
    g = load_game(s, cfg)
    with cfg.session() as smt:
        m = build_monitor(s, cfg, smt)
        p = gm.product(g, m, smt)
    for line in monitor_summary(m)[:3] + product_summary(g, p):
        click.echo(line)
    _write(cfg, gm.export(p, cfg.fmt))


@main.command("verify")
@click.argument("spec", type=click.Path(dir_okay=False, path_type=Path))
@automaton_options
@build_options
@_opt("--samples", type=click.IntRange(min=1), default=400, show_default=True,
      help="Sampled lassos per oracle (the space is enumerated when smaller).")
@click.option("--inject-fault", "fault", type=click.Choice(sorted(FAULTS)), default=None, hidden=True)
@_guarded
def cmd_verify(spec: Path, verbose: int, **kw):
    """Check the monitor (and the product, given an automaton) against bounded lasso oracles."""
    _setup_logging(verbose)
    cfg = _config(kw)
    s = _load_spec(spec)
    phi = s.formula()
    variables = sorted(set(s.inputs) | set(s.program_vars))
    box = orc.LassoBox(radius=cfg.box, extra_values=tuple(sorted(orc.spec_constants([phi]))))
    auditor = soundness_auditor(s, cfg) if cfg.debug_soundness else None
    game = load_game(s, cfg) if (cfg.hoa is not None or cfg.translator) else None
    results = []
    with cfg.session() as smt:
        m = build_monitor(s, cfg, smt, auditor=auditor)
        lassos = orc.sample_lassos(variables, box, cfg.samples, cfg.seed)
        lassos += orc.steered_lassos(m, variables, box, cfg.samples // 2, cfg.seed + 1)
        results.append(orc.check_state_correctness(m, phi, lassos))
        results.append(orc.check_monitor_for_formula(m, phi, lassos))
        if game is not None:
            p = gm.product(game, m, smt)
            results.extend(orc.check_pseudo_language(phi, game, p, lassos))
    if auditor is not None:
        results.append(auditor.result())
    click.echo(f"{len(lassos)} lassos over {', '.join(variables) or 'no variables'}, "
               f"values within radius {cfg.box} plus spec constants")
    for r in results:
        click.echo(r.line())
    if not all(r.ok for r in results):
        raise CliError("oracle failure", EXIT_FAIL)
    click.echo("all oracles passed")


if __name__ == "__main__":  # pragma: no cover
    main()
