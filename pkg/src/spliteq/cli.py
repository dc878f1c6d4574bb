"""Command line: solve, trace, verify, gen, oracle, compare.

Exit codes: 0 success, 1 verification failure or mismatch, 2 input error,
3 solver budget error.  SPLITEQ_MODE overrides the arithmetic mode.
"""

from __future__ import annotations

import sys

import click

from .errors import (
    BudgetExceeded,
    InfeasibleShape,
    NoConverge,
    ParseError,
    PivotBudgetExceeded,
    RankDefectTooLarge,
    SizeTooLarge,
    UnsupportedCosts,
)
from .game import verify_equilibrium
from .generators import (
    CoefficientRanges,
    gen_complete,
    gen_example_8player,
    gen_gadget,
    gen_grid,
    gen_parallel_links,
    gen_random,
    make_bimatrix,
)
from .homotopy import evaluate, restrict_flow, trace
from .instance import Metadata, emit_breakpoints, format_flow, parse, parse_flow, parse_number, serialize
from .oracle import MODES, OracleConfig, exhaustive_support_scan, oracle_equilibrium

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_BUDGET = 0, 1, 2, 3
MODE = click.Choice(["exact", "float"])


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load(path: str, mode: str | None = None):
    try:
        with open(path, encoding="utf-8") as handle:
            game, meta = parse(handle.read())
    except OSError as exc:
        _fail(str(exc), EXIT_INPUT)
    except (ParseError, ValueError) as exc:
        _fail(f"{path}:{exc}", EXIT_INPUT)
    if mode:
        game = game.with_mode(mode)
    return game, meta


def _lambda(text: str):
    try:
        value = parse_number(text)
    except ParseError as exc:
        _fail(f"--lambda: {exc}", EXIT_INPUT)
    if not 0 <= value <= 1:
        _fail("--lambda must lie in [0, 1]", EXIT_INPUT)
    return value


def _trace(game, meta: Metadata, lam=None, budget=None):
    try:
        return trace(game, budget=budget, stop_at=lam, big=meta.big)
    except (PivotBudgetExceeded, RankDefectTooLarge) as exc:
        _fail(str(exc), EXIT_BUDGET)


def _solve(game, meta: Metadata, lam, budget=None):
    f = _trace(game, meta, lam, budget)
    try:
        return restrict_flow(f, evaluate(f, lam))
    except InfeasibleShape as exc:
        _fail(f"no feasible routing: {exc}", EXIT_INPUT)


@click.group()
def main() -> None:
    """Equilibria of atomic splittable congestion games with affine costs."""


@main.command()
@click.argument("path", type=click.Path(dir_okay=False))
@click.option("--lambda", "lam", default="1", help="Demand multiplier in [0, 1].")
@click.option("--mode", type=MODE, envvar="SPLITEQ_MODE", default="exact", show_default=True)
@click.option("--decimals", type=int, default=None, help="Render decimals instead of fractions.")
@click.option("--budget", type=int, default=None, help="Pivot budget.")
def solve(path: str, lam: str, mode: str, decimals: int | None, budget: int | None) -> None:
    """Print the equilibrium flow, one line per player."""
    game, meta = _load(path, mode)
    value = _lambda(lam)
    x = _solve(game, meta, value, budget)
    report = verify_equilibrium(game, x, value, 0 if mode == "exact" else game.tolerance)
    out = [float(v) for v in x] if mode == "float" else x
    click.echo(format_flow(game, out, decimals), nl=False)
    if not report.passed:
        _fail(report.summary(), EXIT_VERIFY)


@main.command(name="trace")
@click.argument("path", type=click.Path(dir_okay=False))
@click.option("--out", "fmt", type=click.Choice(["csv", "jsonlike"]), default="csv", show_default=True)
@click.option("--decimals", type=int, default=None)
@click.option("--mode", type=MODE, envvar="SPLITEQ_MODE", default="exact", show_default=True)
@click.option("--budget", type=int, default=None)
def trace_cmd(path: str, fmt: str, decimals: int | None, mode: str, budget: int | None) -> None:
    """Print every breakpoint of the equilibrium path from zero to full demand."""
    game, meta = _load(path, mode)
    f = _trace(game, meta, None, budget)
    if decimals is None and mode == "float":
        decimals = 12
    try:
        click.echo(emit_breakpoints(f, fmt, decimals), nl=False)
    except InfeasibleShape as exc:
        _fail(f"no feasible routing: {exc}", EXIT_INPUT)


@main.command()
@click.argument("path", type=click.Path(dir_okay=False))
@click.argument("flow_path", type=click.Path(dir_okay=False))
@click.option("--lambda", "lam", default="1")
@click.option("--tolerance", default="0", show_default=True)
def verify(path: str, flow_path: str, lam: str, tolerance: str) -> None:
    """Check a flow file against the equilibrium conditions."""
    game, _ = _load(path)
    value = _lambda(lam)
    try:
        with open(flow_path, encoding="utf-8") as handle:
            x = parse_flow(handle.read())
        tol = parse_number(tolerance)
    except OSError as exc:
        _fail(str(exc), EXIT_INPUT)
    except ParseError as exc:
        _fail(f"{flow_path}:{exc}", EXIT_INPUT)
    if len(x) != game.m * game.k:
        _fail(f"flow has {len(x)} entries, expected {game.m * game.k}", EXIT_INPUT)
    report = verify_equilibrium(game, x, value, tol)
    click.echo(report.summary())
    sys.exit(EXIT_OK if report.passed else EXIT_VERIFY)


@main.group()
def gen() -> None:
    """Write a generated instance to stdout."""


def _emit(game, meta: Metadata) -> None:
    click.echo(serialize(game, meta), nl=False)


def _ranges(depth: int) -> CoefficientRanges:
    return CoefficientRanges(depth=depth)


@gen.command(name="random")
@click.option("--seed", type=int, default=0)
@click.option("--n", "n", type=int, default=4)
@click.option("--m", "m", type=int, default=6)
@click.option("--k", "k", type=int, default=2)
@click.option("--depth", type=int, default=3, help="Coefficients lie on a 2^-depth grid.")
@click.option("--shared", is_flag=True, help="Player-independent costs.")
@click.option("--shape", type=click.Choice(["sparse", "parallel", "grid", "complete"]), default="sparse")
def gen_random_cmd(seed: int, n: int, m: int, k: int, depth: int, shared: bool, shape: str) -> None:
    """Seeded random game; --shape picks the graph family (grid uses n rows and m columns)."""
    ranges = _ranges(depth)
    try:
        if shape == "parallel":
            game = gen_parallel_links(seed, m, k, ranges, shared)
        elif shape == "grid":
            game = gen_grid(seed, n, m, k, ranges, shared)
        elif shape == "complete":
            game = gen_complete(seed, n, k, ranges, shared)
        else:
            game = gen_random(seed, n, m, k, ranges, shared)
    except InfeasibleShape as exc:
        _fail(str(exc), EXIT_INPUT)
    _emit(game, Metadata(entries=[("generator", f"random-{shape}"), ("seed", str(seed))]))


@gen.command(name="example8")
@click.option("--big", default="1000000", show_default=True)
def gen_example_cmd(big: str) -> None:
    """Four-vertex, eight-player game with a continuum of equilibria at half demand."""
    value = parse_number(big)
    _emit(gen_example_8player(value), Metadata(big=value, entries=[("generator", "example8")]))


@gen.command(name="gadget")
@click.option("--U", "u", required=True, help="Rows separated by ';', entries by ',', e.g. 1,0;0,1")
@click.option("--V", "v", required=True)
@click.option("--beta", default="1", show_default=True)
@click.option("--delta", default="1/1000000", show_default=True)
@click.option("--max-edges", type=int, default=20000, show_default=True)
def gen_gadget_cmd(u: str, v: str, beta: str, delta: str, max_edges: int) -> None:
    """Two-player routing game built from a win-lose bimatrix game."""
    try:
        U = [[int(x) for x in row.split(",")] for row in u.split(";")]
        V = [[int(x) for x in row.split(",")] for row in v.split(";")]
        bm = make_bimatrix(U, V, parse_number(beta), parse_number(delta))
        game, _ = gen_gadget(bm, max_edges)
    except (ValueError, ParseError) as exc:
        _fail(str(exc), EXIT_INPUT)
    except SizeTooLarge as exc:
        _fail(str(exc), EXIT_BUDGET)
    _emit(game, Metadata(delta=bm.delta, entries=[("generator", "gadget")], bimatrix=bm))


@main.command()
@click.argument("path", type=click.Path(dir_okay=False))
@click.option("--lambda", "lam", default="1")
@click.option("--mode", "oracle_mode", type=click.Choice(MODES), default="best-response", show_default=True)
@click.option("--max-iterations", type=int, default=2000)
def oracle(path: str, lam: str, oracle_mode: str, max_iterations: int) -> None:
    """Equilibrium from an independent method, for cross-checking small instances."""
    game, _ = _load(path)
    value = _lambda(lam)
    try:
        if oracle_mode == "exhaustive-support":
            scan = exhaustive_support_scan(game, value)
            click.echo(f"# {len(scan.equilibria)} equilibria, degenerate={scan.degenerate}")
            for x in scan.equilibria:
                click.echo(format_flow(game, list(x)), nl=False)
            return
        x = oracle_equilibrium(game, value, OracleConfig(max_iterations=max_iterations, mode=oracle_mode))
    except (UnsupportedCosts, InfeasibleShape) as exc:
        _fail(str(exc), EXIT_INPUT)
    except (NoConverge, BudgetExceeded) as exc:
        _fail(str(exc), EXIT_BUDGET)
    click.echo(format_flow(game, x), nl=False)


@main.command()
@click.argument("path", type=click.Path(dir_okay=False))
@click.option("--lambda", "lam", default="1")
@click.option("--tolerance", type=float, default=1e-8, show_default=True)
def compare(path: str, lam: str, tolerance: float) -> None:
    """Homotopy solution against the oracle; exit 1 when they differ beyond the tolerance."""
    game, meta = _load(path)
    value = _lambda(lam)
    x = _solve(game, meta, value)
    mode = "potential-min" if game.player_independent and game.k > 1 else "best-response"
    try:
        y = oracle_equilibrium(game, value, OracleConfig(mode=mode))
    except NoConverge as exc:
        _fail(f"oracle: {exc}", EXIT_BUDGET)
    gap = max((abs(float(a) - b) for a, b in zip(x, y)), default=0.0)
    report = verify_equilibrium(game, x, value, 0)
    ok = gap <= tolerance and report.passed
    click.echo(f"oracle={mode} max_deviation={gap:.3e} verify={report.summary()} {'match' if ok else 'MISMATCH'}")
    sys.exit(EXIT_OK if ok else EXIT_VERIFY)


if __name__ == "__main__":
    main()
