"""Lambda ranges, neighbor pivots, degenerate traversal and start/pred/succ.

Ties are resolved as if every offset b_(e,i) carried an extra eps**(i*m+e+1)
for an infinitesimal eps > 0.  Every bound is affine in b with a denominator
that does not depend on b, so its value under the perturbation is the pair
(value, gradient with respect to b) compared lexicographically.  Gradients are
only computed for candidates that tie on the plain value.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable, Sequence

from gmpy2 import mpq

from .errors import ClampedBoundary, DegenerateSupport, RankDefectTooLarge
from .game import Game, strongly_connect
from .linalg import dot, matvec, vecmat
from .rational import ONE, ZERO, sign
from .support import (
    BlockLaplacian,
    Support,
    SupportMatrices,
    apply_c,
    build_block_laplacian,
    build_support_matrices,
    closer_than,
    ctilde_block,
    offset_excess,
    tension,
)

Pair = tuple[int, int]
LOWER, UPPER = "min", "max"


@dataclass(frozen=True, order=True)
class LexKey:
    """A value under the implicit offset perturbation: base, then eps coefficients."""

    base: mpq
    perturbation: tuple[mpq, ...] = ()

    def padded(self, length: int) -> tuple[mpq, ...]:
        return (self.base,) + self.perturbation + (ZERO,) * (length - len(self.perturbation))


@dataclass
class Bound:
    lam: mpq
    pair: Pair | None  # None marks the clamp at 0 or 1
    key: LexKey

    @property
    def clamped(self) -> bool:
        return self.pair is None


@dataclass
class SupportState:
    """A support together with its lambda interval and boundary potentials."""

    laplacian: BlockLaplacian
    lower: Bound
    upper: Bound

    @property
    def game(self) -> Game:
        return self.laplacian.game

    @property
    def support(self) -> Support:
        return self.laplacian.support

    @property
    def sigma(self) -> int:
        return self.laplacian.sign

    @property
    def lam_min(self) -> mpq:
        return self.lower.lam

    @property
    def lam_max(self) -> mpq:
        return self.upper.lam

    @property
    def tight_min(self) -> Pair | None:
        return self.lower.pair

    @property
    def tight_max(self) -> Pair | None:
        return self.upper.pair

    def potential(self, lam: mpq) -> list[mpq]:
        lap = self.laplacian
        return [lam * p + d for p, d in zip(lap.dpi, lap.dbar)]

    @property
    def pi_min(self) -> list[mpq]:
        return self.potential(self.lam_min)

    @property
    def pi_max(self) -> list[mpq]:
        return self.potential(self.lam_max)

    def bound(self, side: str) -> Bound:
        return self.lower if side == LOWER else self.upper


@dataclass
class NullspaceData:
    """Walk along the kernel of a weakly degenerate support at fixed lambda."""

    support: Support
    direction: list[mpq]
    lam: mpq
    xi_min: mpq
    xi_max: mpq
    tight_at_min: Pair
    tight_at_max: Pair
    anchor: list[mpq]
    exit_potential: list[mpq]
    circulation: list[mpq]


@dataclass
class DegenerateNeighbor:
    """Marker returned by a rank-one update whose determinant factor vanishes."""

    support: Support
    raw_direction: list[mpq]


@dataclass
class Step:
    """Outcome of pred or succ that lands on another state."""

    state: SupportState
    pair: Pair
    side: str
    lam: mpq
    potential: list[mpq]
    factor: mpq | None = None
    degenerate: NullspaceData | None = None
    exit_pair: Pair | None = None


@dataclass
class Terminal:
    """pred/succ reached a 0- or 1-potential."""

    side: str
    lam: mpq
    potential: list[mpq]


# ---------------------------------------------------------------- lambda range


def _w_dot_tension(mats: SupportMatrices, tens: Sequence[mpq], e: int, i: int) -> mpq:
    m, k = mats.game.m, mats.game.k
    row = mats.w_row(e, i)
    return sum((row[j] * tens[j * m + e] for j in range(k) if row[j] and tens[j * m + e]), ZERO)


def _w_full(mats: SupportMatrices, e: int, i: int) -> list[mpq]:
    game = mats.game
    out = [ZERO] * (game.m * game.k)
    for j, v in enumerate(mats.w_row(e, i)):
        out[j * game.m + e] = v
    return out


class _Gradient:
    """Offset gradient of one tied bound.

    The gradient of w^T (G^T dbar(b) - b) in b is C^T G^T L*^T G w - w.  G w
    has 2k nonzero entries, so h = L*^T G w combines 2k rows of L*.  On
    degenerate instances the result is mostly zero, and zero entries are
    skipped throughout.  ``along`` and ``lam_grad`` add the term of a kernel
    walk, whose step length also moves with the perturbation.
    """

    def __init__(
        self, lap: BlockLaplacian, w_mats: SupportMatrices, pair: Pair, scale: mpq,
        along: mpq = ZERO, lam_grad: Sequence[mpq] = (),
    ) -> None:
        self.lap, self.pair, self.scale = lap, pair, scale
        self.along, self.lam_grad = along, lam_grad
        game = lap.game
        e, i = pair
        n = game.n
        self.w = w_mats.w_row(e, i)
        tail, head = game.edges[e]
        gw: dict[int, mpq] = {}
        for j, v in enumerate(self.w):
            if v:
                gw[j * n + head] = gw.get(j * n + head, ZERO) + v
                gw[j * n + tail] = gw.get(j * n + tail, ZERO) - v
        self.gw = [(r, v) for r, v in gw.items() if v]
        self._vector: tuple[mpq, ...] | None = None

    def along_dot(self, pi: Sequence[mpq]) -> mpq:
        return sum((v * pi[r] for r, v in self.gw), ZERO)

    def vector(self) -> tuple[mpq, ...]:
        if self._vector is not None:
            return self._vector
        game, mats = self.lap.game, self.lap.mats
        n, m, k = game.n, game.m, game.k
        inv = self.lap.inverse
        h = [ZERO] * (n * k)
        for r, v in self.gw:
            h = [a + v * b if b else a for a, b in zip(h, inv[r])]
        g = [ZERO] * (m * k)
        support = mats.support
        for e, (tail, head) in enumerate(game.edges):
            block = mats.ctilde[e]
            for i in range(k):
                t = h[i * n + head] - h[i * n + tail]
                if t and support.is_active(e, i):
                    row = block[i]
                    for j in range(k):
                        if row[j]:
                            g[j * m + e] += row[j] * t
        e0 = self.pair[0]
        for j in range(k):
            g[j * m + e0] -= self.w[j]
        if self.along:
            g = [x + self.along * y if y else x for x, y in zip(g, self.lam_grad)]
        self._vector = tuple(x * self.scale if x else ZERO for x in g)
        return self._vector

    def key(self, base: mpq) -> LexKey:
        return LexKey(base, self.vector())


def _lex_winners(items: list[tuple[Pair | None, _Gradient | None]], length: int, prefer_max: bool) -> list:
    """Entries whose perturbation coefficients are lexicographically best; None means all zero."""
    zero = (ZERO,) * length
    vectors = [zero if grad is None else grad.vector() for _, grad in items]
    best = max(vectors) if prefer_max else min(vectors)
    return [item for item, vec in zip(items, vectors) if vec == best]


def bound_key(lap: BlockLaplacian, pair: Pair) -> LexKey:
    """Full perturbation key of the lambda at which row ``pair`` of W vanishes."""
    e, i = pair
    game = lap.game
    mats = lap.mats
    den = _w_dot_tension(mats, tension(game, lap.dpi), e, i)
    rest = [t - b for t, b in zip(tension(game, lap.dbar), game.offset)]
    val0 = _w_dot_tension(mats, rest, e, i)
    return _Gradient(lap, mats, pair, -1 / den).key(-val0 / den)


def farthest_pair(game: Game, support: Support, pairs: Sequence[Pair]) -> Pair:
    """Among pairs that tie even lexicographically, the edge farthest from the source.

    Distance is judged by one-in/one-out cuts of the player's active edges plus
    the tied candidates, which is where such exact ties come from.
    """
    for cand in pairs:
        e, i = cand
        anchor = game.commodities[i].source
        keep = {f for f in range(game.m) if support.is_active(f, i)}
        keep |= {f for f, j in pairs if j == i}
        order = sorted(keep)
        sub = [game.edges[f] for f in order]
        pos = {f: idx for idx, f in enumerate(order)}
        if all(
            other == cand
            or (other[1] == i and closer_than(game.n, sub, anchor, pos[other[0]], pos[e]))
            for other in pairs
        ):
            return cand
    return min(pairs, key=lambda p: (p[1], p[0]))


def _select(
    lap: BlockLaplacian,
    candidates: list[tuple[mpq, Pair | None, mpq]],
    clamp: mpq,
    prefer_max: bool,
) -> Bound:
    """Best bound among (lambda, pair, W-row slope) candidates; ties go to the perturbation."""
    game = lap.game
    length = game.m * game.k
    best = max(c[0] for c in candidates) if prefer_max else min(c[0] for c in candidates)
    tied = [c for c in candidates if c[0] == best]
    if len(tied) == 1:
        value, pair, _ = tied[0]
        key = LexKey(value) if pair is None else None
        return Bound(value, pair, key)  # type: ignore[arg-type]
    items = [
        (pair, None if pair is None else _Gradient(lap, lap.mats, pair, -1 / den))
        for _, pair, den in tied
    ]
    winners = _lex_winners(items, length, prefer_max)
    if any(pair is None for pair, _ in winners):
        return Bound(best, None, LexKey(clamp))
    pair = farthest_pair(game, lap.support, [pair for pair, _ in winners])
    grad = next(g for p, g in winners if p == pair)
    return Bound(best, pair, grad.key(best))


def lambda_range(lap: BlockLaplacian) -> tuple[Bound, Bound]:
    """Lower and upper lambda bounds of the support's potential segment."""
    if lap.sign == 0 or lap.dpi is None:
        raise DegenerateSupport(f"reduced Laplacian has rank defect {lap.rank_defect}")
    game, mats = lap.game, lap.mats
    m, k = game.m, game.k
    dtens = tension(game, lap.dpi)
    rest = [t - b for t, b in zip(tension(game, lap.dbar), game.offset)]
    lows: list[tuple[mpq, Pair | None, mpq]] = [(ZERO, None, ONE)]
    highs: list[tuple[mpq, Pair | None, mpq]] = [(ONE, None, ONE)]
    for e in range(m):
        block = mats.ctilde[e]
        dts = [dtens[j * m + e] for j in range(k)]
        rts = [rest[j * m + e] for j in range(k)]
        for i in range(k):
            row = block[i]
            den = sum((row[j] * dts[j] for j in range(k) if dts[j]), ZERO)
            if not den:
                continue
            val0 = sum((row[j] * rts[j] for j in range(k) if rts[j]), ZERO)
            # sigma cancels in -val0/den; it only decides which side bounds.
            lam = -val0 / den
            # W negates inactive rows; keys are taken with respect to W.
            wden = den if mats.support.is_active(e, i) else -den
            if mats.support.sigma(e, i) * den > 0:
                lows.append((lam, (e, i), wden))
            else:
                highs.append((lam, (e, i), wden))
    lower = _select(lap, lows, ZERO, prefer_max=True)
    upper = _select(lap, highs, ONE, prefer_max=False)
    return lower, upper


def _ensure_key(lap: BlockLaplacian, bound: Bound) -> LexKey:
    if bound.key is None:
        bound.key = LexKey(bound.lam) if bound.pair is None else bound_key(lap, bound.pair)
    return bound.key


def make_state(lap: BlockLaplacian) -> SupportState:
    lower, upper = lambda_range(lap)
    return SupportState(lap, lower, upper)


# ------------------------------------------------------------ neighbor pivots


def neighbor(support: Support, e: int, i: int) -> Support:
    return support.toggle(e, i)


def _update_vectors(lap: BlockLaplacian, e: int, i: int) -> tuple[list[mpq], list[mpq], SupportMatrices]:
    """Vectors u, v with L' = L + u v^T after toggling (e, i), and the new matrices."""
    game, old = lap.game, lap.support
    new = old.toggle(e, i)
    k = game.k
    block = ctilde_block(game, new, e)
    if new.is_active(e, i):
        # Entering: C_e grows by p c^T with c the old C~ row and p = e_i - omega'/(kappa'+1).
        with_i, row = new, lap.mats.ctilde[e][i]
        scale = ONE
    else:
        # Leaving is the reverse pivot: subtract p c'^T with c' the new C~ row.
        with_i, row = old, block[i]
        scale = -ONE
    denom = with_i.kappa(e) + 1
    p = [(ONE if j == i else ZERO) - (ONE / denom if with_i.is_active(e, j) else ZERO) for j in range(k)]
    n = game.n
    tail, head = game.edges[e]
    u = [ZERO] * (n * k)
    v = [ZERO] * (n * k)
    for j in range(k):
        if p[j]:
            u[j * n + head] += scale * p[j]
            u[j * n + tail] -= scale * p[j]
        if row[j]:
            v[j * n + head] += row[j]
            v[j * n + tail] -= row[j]
    blocks = list(lap.mats.ctilde)
    blocks[e] = block
    return u, v, SupportMatrices(game, new, tuple(blocks))


def rank_one_update(lap: BlockLaplacian, e: int, i: int) -> BlockLaplacian | DegenerateNeighbor:
    """Laplacian of the (e, i)-neighbor via L' = L + u v^T and Sherman-Morrison on L*."""
    if lap.inverse is None:
        raise DegenerateSupport("cannot update from a degenerate support")
    u, v, mats = _update_vectors(lap, e, i)
    lu = matvec(lap.inverse, u)
    factor = ONE + dot(v, lu)
    if not factor:
        return DegenerateNeighbor(mats.support, lu)
    vl = vecmat(v, lap.inverse)
    # Rows are never mutated in place, so untouched rows are shared with ``lap``.
    matrix = list(lap.matrix)
    vnz = [(b, y) for b, y in enumerate(v) if y]
    for a, x in enumerate(u):
        if x:
            row = matrix[a][:]
            for b, y in vnz:
                row[b] += x * y
            matrix[a] = row
    inverse = list(lap.inverse)
    for a, x in enumerate(lu):
        if x:
            x = x / factor
            inverse[a] = [r - x * y if y else r for r, y in zip(inverse[a], vl)]
    result = BlockLaplacian(
        lap.game, mats.support, mats, matrix, lap.sign * sign(factor), lap.rank, inverse,
        offset_excess(mats), lap.dy, fresh=False, factor=factor,
    )
    result.refresh_directions()
    return result


# ---------------------------------------------------------- degenerate walks


def _normalize(vec: list[mpq]) -> list[mpq]:
    lead = next((x for x in vec if x), None)
    if lead is None:
        raise DegenerateSupport("zero nullspace direction")
    return [x / lead for x in vec]


def traverse_degenerate(
    state: SupportState, side: str, raw_direction: list[mpq]
) -> tuple[SupportState, NullspaceData, Pair]:
    """Cross the weakly degenerate neighbor at ``side`` and return the exit state.

    The walk starts at the shared boundary potential, moves along the kernel
    direction away from the entering face and stops at the first W-row of the
    degenerate support that would turn negative (ties by perturbation key).
    """
    lap = state.laplacian
    game = lap.game
    m, k = game.m, game.k
    bound = state.bound(side)
    entry = bound.pair
    if entry is None:
        raise ClampedBoundary(f"{side} side is clamped")
    lam_key = _ensure_key(lap, bound)
    lam = bound.lam
    anchor = state.potential(lam)
    deg_support = state.support.toggle(*entry)
    mats = build_support_matrices(game, deg_support)
    direction = _normalize(raw_direction)
    slope = apply_c(mats, tension(game, direction), "w")
    rows = apply_c(mats, [t - b for t, b in zip(tension(game, anchor), game.offset)], "w")
    e_in, i_in = entry
    s = sign(slope[i_in * m + e_in])
    if s == 0:
        raise RankDefectTooLarge("kernel direction does not leave the entering face")
    cands = []
    for idx in range(m * k):
        if idx == i_in * m + e_in:
            continue
        t = s * slope[idx]
        if t < 0:
            cands.append((rows[idx] / -t, (idx % m, idx // m), -t))
    if not cands:
        raise RankDefectTooLarge("kernel walk is unbounded")
    best = min(c[0] for c in cands)
    tied = [c for c in cands if c[0] == best]
    if len(tied) > 1:
        lam_grad = lam_key.padded(m * k)[1:]
        items = []
        for _, pair, rate in tied:
            grad = _Gradient(lap, mats, pair, 1 / rate, lam_grad=lam_grad)
            grad.along = grad.along_dot(lap.dpi)
            items.append((pair, grad))
        winners = [pair for pair, _ in _lex_winners(items, m * k, prefer_max=False)]
        exit_pair = farthest_pair(game, deg_support, winners)
    else:
        exit_pair = tied[0][1]
    xi = s * best
    exit_pi = [a + xi * d for a, d in zip(anchor, direction)]
    out_support = deg_support.toggle(*exit_pair)
    out_lap = build_block_laplacian(game, out_support)
    if out_lap.sign == 0:
        raise RankDefectTooLarge("exit support of a kernel walk is degenerate")
    circulation = apply_c(mats, tension(game, direction), "c")
    lo, hi = (ZERO, xi) if xi > 0 else (xi, ZERO)
    at_lo, at_hi = (entry, exit_pair) if xi > 0 else (exit_pair, entry)
    data = NullspaceData(
        deg_support, direction, lam, lo, hi, at_lo, at_hi, anchor, exit_pi, circulation,
    )
    return make_state(out_lap), data, exit_pair


# ------------------------------------------------------------ start/pred/succ


def _lex_shortest_tree(game: Game, i: int) -> list[int]:
    """Tree edges of player i's shortest paths on offsets, ties broken by the perturbation."""
    n, m = game.n, game.m
    source = game.commodities[i].source
    out: list[list[int]] = [[] for _ in range(n)]
    for e, (t, _) in enumerate(game.edges):
        out[t].append(e)
    done = [False] * n
    parent = [-1] * n
    zero = (0,) * m
    heap: list[tuple[mpq, tuple[int, ...], int, int]] = [(ZERO, zero, source, -1)]
    while heap:
        dist, pert, v, via = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        parent[v] = via
        for e in out[v]:
            w = game.edges[e][1]
            if not done[w]:
                bumped = pert[:e] + (pert[e] + 1,) + pert[e + 1:]
                heapq.heappush(heap, (dist + game.b(e, i), bumped, w, e))
    if not all(done):
        raise DegenerateSupport("graph is not strongly connected")
    return [e for e in parent if e >= 0]


def start_support(game: Game) -> Support:
    pairs = [(e, i) for i in range(game.k) for e in _lex_shortest_tree(game, i)]
    return Support.from_pairs(game.m, game.k, pairs)


def start_state(game: Game, big: object = 10**6) -> SupportState:
    """Shortest-path support of the zero flow; augments the graph if needed."""
    game = strongly_connect(game, big)
    lap = build_block_laplacian(game, start_support(game))
    return make_state(lap)


def cross(state: SupportState, side: str, on_update: Callable | None = None) -> Step | Terminal:
    """Move to the continuative neighbor at ``side``, walking through a degenerate one."""
    bound = state.bound(side)
    lam = bound.lam
    pi = state.potential(lam)
    if bound.clamped:
        return Terminal(side, lam, pi)
    e, i = bound.pair
    update = rank_one_update(state.laplacian, e, i)
    if on_update is not None:
        on_update(state, (e, i), update)
    if isinstance(update, DegenerateNeighbor):
        nxt, data, exit_pair = traverse_degenerate(state, side, update.raw_direction)
        return Step(nxt, (e, i), side, lam, pi, ZERO, data, exit_pair)
    return Step(make_state(update), (e, i), side, lam, pi, update.factor)


def succ_side(state: SupportState) -> str:
    return UPPER if state.sigma > 0 else LOWER


def pred_side(state: SupportState) -> str:
    return LOWER if state.sigma > 0 else UPPER


def succ(state: SupportState, on_update: Callable | None = None) -> Step | Terminal:
    return cross(state, succ_side(state), on_update)


def pred(state: SupportState, on_update: Callable | None = None) -> Step | Terminal:
    return cross(state, pred_side(state), on_update)


def continuative_neighbor(state: SupportState, side: str) -> Support:
    """Support across the lex-selected tight pair at ``side`` (no degenerate walk)."""
    bound = state.bound(side)
    if bound.clamped:
        raise ClampedBoundary(f"{side} side is clamped at {bound.lam}")
    return state.support.toggle(*bound.pair)


def default_pivot_budget(game: Game) -> int:
    return min(10 * 3 ** min(game.m * game.k, 20), 10**7)
