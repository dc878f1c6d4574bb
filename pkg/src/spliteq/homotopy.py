"""Parametric equilibria by following start/succ from zero demand to full demand."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from gmpy2 import mpq

from .errors import AssertionViolation, InfeasibleShape, PivotBudgetExceeded, UnsupportedCosts
from .game import Game, strongly_connect
from .pivot import (
    NullspaceData,
    Step,
    SupportState,
    Terminal,
    default_pivot_budget,
    make_state,
    pred_side,
    start_support,
    succ,
    succ_side,
)
from .rational import ONE, ZERO, q
from .support import Support, build_block_laplacian, induced_flow


@dataclass(frozen=True)
class Breakpoint:
    lam: mpq
    potential: tuple[mpq, ...]
    flow: tuple[mpq, ...]


@dataclass(frozen=True)
class PathEntry:
    """One visited state, kept for inspection and tests."""

    support: Support
    sigma: int
    lam_min: mpq
    lam_max: mpq
    delta_pi: tuple[mpq, ...]
    dbar: tuple[mpq, ...]
    fresh: bool


@dataclass
class PiecewiseAffineEquilibrium:
    """Breakpoints of f(lambda); ``supports[j]`` governs the piece ending at breakpoint j+1."""

    game: Game
    original_edges: int
    breakpoints: list[Breakpoint] = field(default_factory=list)
    supports: list[Support] = field(default_factory=list)
    max_lambda: mpq = ZERO
    pivots: int = 0
    degenerate_walks: int = 0
    path: list[PathEntry] = field(default_factory=list)
    walks: list[NullspaceData] = field(default_factory=list)
    alternates: list[Breakpoint] = field(default_factory=list)

    @property
    def lambdas(self) -> list[mpq]:
        return [bp.lam for bp in self.breakpoints]


def _point(state: SupportState, lam: mpq) -> Breakpoint:
    pi = state.potential(lam)
    return Breakpoint(lam, tuple(pi), tuple(induced_flow(state.laplacian.mats, pi)))


class _Emitter:
    """Keeps only the monotone envelope of the internal path."""

    def __init__(self, result: PiecewiseAffineEquilibrium) -> None:
        self.result = result

    def start(self, point: Breakpoint) -> None:
        self.result.breakpoints.append(point)
        self.result.max_lambda = point.lam

    def _append(self, point: Breakpoint, support: Support) -> None:
        last = self.result.breakpoints[-1]
        if point.lam == last.lam and point.flow == last.flow and point.potential == last.potential:
            return
        self.result.breakpoints.append(point)
        self.result.supports.append(support)

    def segment(self, begin: Breakpoint, end: Breakpoint, support: Support) -> None:
        top = self.result.max_lambda
        if end.lam > top:
            if begin.lam < top:
                t = (top - begin.lam) / (end.lam - begin.lam)
                self._append(_blend(begin, end, t, top), support)
            self._append(end, support)
            self.result.max_lambda = end.lam
        elif end.lam == top:
            self._append(end, support)
        else:
            self.result.alternates.append(end)


def _blend(a: Breakpoint, b: Breakpoint, t: mpq, lam: mpq) -> Breakpoint:
    return Breakpoint(
        lam,
        tuple(x + t * (y - x) for x, y in zip(a.potential, b.potential)),
        tuple(x + t * (y - x) for x, y in zip(a.flow, b.flow)),
    )


def _record(result: PiecewiseAffineEquilibrium, state: SupportState) -> None:
    lap = state.laplacian
    result.path.append(
        PathEntry(state.support, state.sigma, state.lam_min, state.lam_max,
                  tuple(lap.dpi), tuple(lap.dbar), lap.fresh)
    )


def trace(
    game: Game,
    budget: int | None = None,
    stop_at: object | None = None,
    big: object = 10**6,
    on_step: Callable[[SupportState, Step | Terminal], None] | None = None,
    on_update: Callable | None = None,
) -> PiecewiseAffineEquilibrium:
    """Follow succ from the start state until a 1-potential is reached.

    With ``stop_at`` the walk ends as soon as the emitted envelope covers that
    demand multiplier.  Graphs that are not strongly connected are augmented
    with expensive edges first; ``result.game`` is the augmented game.
    """
    augmented = strongly_connect(game, big)
    budget = default_pivot_budget(augmented) if budget is None else budget
    stop = None if stop_at is None else q(stop_at)
    result = PiecewiseAffineEquilibrium(augmented, game.m)
    state = make_state(build_block_laplacian(augmented, start_support(augmented)))
    _record(result, state)
    emitter = _Emitter(result)
    emitter.start(_point(state, ZERO))
    while True:
        begin = _point(state, state.bound(pred_side(state)).lam)
        end = _point(state, state.bound(succ_side(state)).lam)
        emitter.segment(begin, end, state.support)
        if stop is not None and result.max_lambda >= stop:
            break
        step = succ(state, on_update)
        if on_step is not None:
            on_step(state, step)
        if isinstance(step, Terminal):
            break
        result.pivots += 1
        if result.pivots > budget:
            raise PivotBudgetExceeded(f"more than {budget} pivots")
        if step.degenerate is not None:
            walk = step.degenerate
            result.degenerate_walks += 1
            result.walks.append(walk)
            exit_point = _point(step.state, walk.lam)
            emitter.segment(end, exit_point, walk.support)
        state = step.state
        _record(result, state)
    return result


def evaluate(f: PiecewiseAffineEquilibrium, lam: object) -> list[mpq]:
    """Flow of f at ``lam``; at a breakpoint shared by two pieces the left piece wins."""
    lam = q(lam)
    bps = f.breakpoints
    if not bps or lam < bps[0].lam or lam > bps[-1].lam:
        raise ValueError(f"lambda {lam} outside [0, 1]")
    if len(bps) == 1 or lam == bps[0].lam:
        return list(bps[0].flow)
    for a, b in zip(bps, bps[1:]):
        if a.lam < lam <= b.lam:
            t = (lam - a.lam) / (b.lam - a.lam)
            return [x + t * (y - x) for x, y in zip(a.flow, b.flow)]
    return list(bps[-1].flow)


def restrict_flow(f: PiecewiseAffineEquilibrium, x: Sequence[mpq]) -> list[mpq]:
    """Drop augmentation edges; they must be unused for the flow to transfer."""
    m_aug, m = f.game.m, f.original_edges
    if m_aug == m:
        return list(x)
    out = []
    for i in range(f.game.k):
        block = x[i * m_aug:(i + 1) * m_aug]
        if any(block[m:]):
            raise InfeasibleShape("an added connectivity edge carries flow; raise its offset")
        out.extend(block[:m])
    return out


def solve_at(game: Game, lam: object, budget: int | None = None, big: object = 10**6) -> list:
    """Equilibrium flow for demands ``lam * r``; floats in float mode, rationals otherwise."""
    lam = q(lam)
    if not ZERO <= lam <= ONE:
        raise ValueError("lambda must lie in [0, 1]")
    f = trace(game, budget=budget, stop_at=lam, big=big)
    x = restrict_flow(f, evaluate(f, lam))
    if game.mode == "float":
        return [float(v) for v in x]
    return x


def solve_player_independent(game: Game, budget: int | None = None, big: object = 10**6) -> PiecewiseAffineEquilibrium:
    """Trace for player-independent costs, asserting positive orientation and monotone lambda."""
    if not game.player_independent:
        raise UnsupportedCosts("costs differ between players")

    def check(state: SupportState, step: Step | Terminal) -> None:
        if state.sigma != 1:
            raise AssertionViolation(f"orientation {state.sigma} on a player-independent game")
        if isinstance(step, Terminal):
            return
        nxt = step.state
        if step.degenerate is not None or nxt.laplacian.fresh:
            raise AssertionViolation("fresh factorization inside a player-independent trace")
        if nxt.sigma != 1 or nxt.lam_min != state.lam_max:
            raise AssertionViolation("lambda decreased along a player-independent trace")

    return trace(game, budget=budget, big=big, on_step=check)
