"""Instance generators: random games, grid games, the 8-player example and the bimatrix gadget."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from gmpy2 import mpq

from .errors import InfeasibleShape, SizeTooLarge
from .game import Commodity, Game
from .rational import q

# Ring 0 -> 1 -> 2 -> 3 -> 0 in both directions; edge e(2j) goes forward from
# vertex j, edge e(2j+1) goes backward into vertex j.
EXAMPLE8_EDGES = ((0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2), (3, 0), (0, 3))
# (source, sink, direct edge, long-path edges) per player.
EXAMPLE8_PLAYERS = (
    (0, 3, 7, (0, 2, 4)),
    (3, 2, 5, (6, 0, 2)),
    (2, 1, 3, (4, 6, 0)),
    (1, 0, 1, (2, 4, 6)),
    (0, 1, 0, (7, 5, 3)),
    (1, 2, 2, (1, 7, 5)),
    (2, 3, 4, (3, 1, 7)),
    (3, 0, 6, (5, 3, 1)),
)


def gen_example_8player(big: object = 10**6) -> Game:
    """Four-vertex, eight-player game with a continuum of equilibria at half demand.

    Each player has a direct edge costing 9x+3 and a three-edge detour whose
    edges cost x+6; every other (edge, player) pair costs x+big.
    """
    big = q(big)
    m = len(EXAMPLE8_EDGES)
    slope, offset = [], []
    for _, _, direct, detour in EXAMPLE8_PLAYERS:
        for e in range(m):
            if e == direct:
                slope.append(mpq(9)), offset.append(mpq(3))
            elif e in detour:
                slope.append(mpq(1)), offset.append(mpq(6))
            else:
                slope.append(mpq(1)), offset.append(big)
    commodities = tuple(Commodity(s, t, mpq(2)) for s, t, _, _ in EXAMPLE8_PLAYERS)
    return Game(4, EXAMPLE8_EDGES, commodities, tuple(slope), tuple(offset))


@dataclass(frozen=True)
class CoefficientRanges:
    slope: tuple[object, object] = (mpq(1, 4), mpq(4))
    offset: tuple[object, object] = (mpq(0), mpq(8))
    rate: tuple[object, object] = (mpq(1), mpq(3))
    depth: int = 3  # values lie on the grid lo + j / 2**depth


def _dyadic(rng: random.Random, bounds: tuple[object, object], depth: int) -> mpq:
    lo, hi = q(bounds[0]), q(bounds[1])
    steps = int((hi - lo) * 2**depth)
    return lo + mpq(rng.randint(0, steps), 2**depth)


def _costs(rng: random.Random, m: int, k: int, ranges: CoefficientRanges, shared: bool):
    slope, offset = [], []
    for i in range(k):
        if shared and i:
            slope += slope[:m]
            offset += offset[:m]
            continue
        for _ in range(m):
            slope.append(_dyadic(rng, ranges.slope, ranges.depth))
            offset.append(_dyadic(rng, ranges.offset, ranges.depth))
    if any(a <= 0 for a in slope):
        raise InfeasibleShape("slope range must be positive")
    return tuple(slope), tuple(offset)


def _commodities(rng: random.Random, n: int, k: int, ranges: CoefficientRanges) -> tuple[Commodity, ...]:
    out = []
    for _ in range(k):
        s, t = rng.sample(range(n), 2)
        out.append(Commodity(s, t, _dyadic(rng, ranges.rate, ranges.depth)))
    return tuple(out)


def gen_random(
    seed: int,
    n: int,
    m: int,
    k: int,
    ranges: CoefficientRanges | None = None,
    player_independent: bool = False,
) -> Game:
    """Weakly connected random game: a random spanning arborescence plus extra edges."""
    ranges = ranges or CoefficientRanges()
    if n < 2 or k < 1:
        raise InfeasibleShape("need at least two vertices and one player")
    if m < n - 1:
        raise InfeasibleShape(f"{m} edges cannot connect {n} vertices")
    rng = random.Random(seed)
    order = list(range(n))
    rng.shuffle(order)
    edges = []
    for pos in range(1, n):
        parent = order[rng.randrange(pos)]
        child = order[pos]
        edges.append((parent, child) if rng.random() < 0.5 else (child, parent))
    while len(edges) < m:
        t, h = rng.sample(range(n), 2)
        edges.append((t, h))
    rng.shuffle(edges)
    slope, offset = _costs(rng, m, k, ranges, player_independent)
    return Game(n, tuple(edges), _commodities(rng, n, k, ranges), slope, offset)


def gen_parallel_links(
    seed: int, m: int, k: int, ranges: CoefficientRanges | None = None, player_independent: bool = False
) -> Game:
    """Two vertices joined by ``m`` parallel links; every player routes from 0 to 1."""
    ranges = ranges or CoefficientRanges()
    if m < 1 or k < 1:
        raise InfeasibleShape("need at least one link and one player")
    rng = random.Random(seed)
    slope, offset = _costs(rng, m, k, ranges, player_independent)
    rates = tuple(Commodity(0, 1, _dyadic(rng, ranges.rate, ranges.depth)) for _ in range(k))
    return Game(2, ((0, 1),) * m, rates, slope, offset)


def gen_grid(
    seed: int, rows: int, cols: int, k: int, ranges: CoefficientRanges | None = None,
    player_independent: bool = False,
) -> Game:
    """Bidirected rows x cols grid; players route between random distinct vertices."""
    ranges = ranges or CoefficientRanges()
    if rows * cols < 2:
        raise InfeasibleShape("grid needs at least two vertices")
    rng = random.Random(seed)
    n = rows * cols
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges += [(v, v + 1), (v + 1, v)]
            if r + 1 < rows:
                edges += [(v, v + cols), (v + cols, v)]
    slope, offset = _costs(rng, len(edges), k, ranges, player_independent)
    return Game(n, tuple(edges), _commodities(rng, n, k, ranges), slope, offset)


def gen_complete(
    seed: int, n: int, k: int, ranges: CoefficientRanges | None = None, player_independent: bool = False
) -> Game:
    """Complete digraph on ``n`` vertices; strongly connected without augmentation."""
    ranges = ranges or CoefficientRanges()
    if n < 2 or k < 1:
        raise InfeasibleShape("need at least two vertices and one player")
    rng = random.Random(seed)
    edges = tuple((t, h) for t in range(n) for h in range(n) if t != h)
    slope, offset = _costs(rng, len(edges), k, ranges, player_independent)
    return Game(n, edges, _commodities(rng, n, k, ranges), slope, offset)


@dataclass(frozen=True)
class BimatrixGame:
    """Two-player win-lose game: payoff matrices with 0/1 entries, target exponent and slope floor."""

    U: tuple[tuple[int, ...], ...]
    V: tuple[tuple[int, ...], ...]
    beta: mpq = mpq(1)
    delta: mpq = mpq(1, 10**6)

    def __post_init__(self) -> None:
        n = len(self.U)
        if n < 1:
            raise ValueError("bimatrix game needs at least one strategy")
        for mat in (self.U, self.V):
            if len(mat) != n or any(len(row) != n for row in mat):
                raise ValueError("U and V must both be n x n")
            if any(v not in (0, 1) for row in mat for v in row):
                raise ValueError("entries must be 0 or 1")
        if self.beta <= 0 or self.delta <= 0:
            raise ValueError("beta and delta must be positive")

    @property
    def n(self) -> int:
        return len(self.U)

    @property
    def epsilon(self) -> float:
        return float(self.n) ** -float(self.beta)

    @property
    def copies(self) -> int:
        """Main edges of each type per gadget, 2 n^(beta+1) rounded up."""
        power = q(self.beta) + 1
        if power.denominator == 1:
            return 2 * self.n ** int(power)
        return math.ceil(2 * float(self.n) ** float(power))


def make_bimatrix(U, V, beta: object = 1, delta: object = mpq(1, 10**6)) -> BimatrixGame:
    return BimatrixGame(tuple(map(tuple, U)), tuple(map(tuple, V)), q(beta), q(delta))


@dataclass(frozen=True)
class GadgetLayout:
    """Edge indices needed to read a bimatrix profile back out of a gadget flow."""

    n: int
    copies: int
    row_entries: tuple[int, ...]  # s1 -> first gadget of row r
    col_entries: tuple[int, ...]  # s2 -> first gadget of column c
    main1: tuple[tuple[tuple[int, ...], ...], ...]  # [r][c] -> type-1 main edges
    main2: tuple[tuple[tuple[int, ...], ...], ...]
    aux1: tuple[int, ...]
    aux2: tuple[int, ...]
    bimatrix: BimatrixGame | None = field(default=None, compare=False)


def gen_gadget(bm: BimatrixGame, max_edges: int = 20000) -> tuple[Game, GadgetLayout]:
    """Two-player routing game whose equilibria encode approximate equilibria of ``bm``.

    Gadget (r, c) has ports sr, tr, sc, tc, inner vertices nr, nc, type-1 main
    edges p_t -> q_t and type-2 main edges p'_t -> q'_t for t = 1..T.  Wiring,
    in edge-index order per gadget:

    * type-1 mains, then type-2 mains;
    * type-1 auxiliaries: sr -> p_t, q_t -> nr, nr -> p'_1, q'_t -> p'_(t+1), q'_T -> tr;
    * type-2 auxiliaries: sc -> p_1, q_t -> p_(t+1), q_T -> nc, nc -> p'_t,
      q'_t -> q'_(t+1), q'_T -> tc.

    Gadgets are laid out row-major.  The macro edges come last: per row,
    s1 -> sr(r,1), tr(r,c) -> sr(r,c+1), tr(r,n) -> t1; then per column,
    s2 -> sc(1,c), tc(r,c) -> sc(r+1,c), tc(n,c) -> t2.  Type-1 auxiliaries
    cost 0 for player 1 and 4n for player 2, type-2 auxiliaries the reverse.
    Type-1 mains have slope 1 - u[r][c] for player 1, type-2 mains 1 - v[r][c]
    for player 2.  Every zero slope, including the constant auxiliary costs,
    becomes ``delta``.
    """
    n, T, delta = bm.n, bm.copies, bm.delta
    per_gadget = 8 * T + 2
    m_total = n * n * per_gadget + 2 * n * (n + 1)
    if m_total > max_edges:
        raise SizeTooLarge(f"gadget needs {m_total} edges, budget is {max_edges}")
    s1, t1, s2, t2 = 0, 1, 2, 3
    edges: list[tuple[int, int]] = []
    cost1: list[tuple[mpq, mpq]] = []  # (slope, offset) for player 1
    cost2: list[tuple[mpq, mpq]] = []
    aux1, aux2 = [], []
    high = mpq(4 * n)

    def add(tail: int, head: int, c1: tuple[mpq, mpq], c2: tuple[mpq, mpq]) -> int:
        edges.append((tail, head))
        cost1.append((c1[0] or delta, c1[1]))
        cost2.append((c2[0] or delta, c2[1]))
        return len(edges) - 1

    def add_aux(tail: int, head: int, kind: int) -> None:
        if kind == 1:
            aux1.append(add(tail, head, (delta, mpq(0)), (delta, high)))
        else:
            aux2.append(add(tail, head, (delta, high), (delta, mpq(0))))

    nxt = 4
    ports = {}
    main1 = [[() for _ in range(n)] for _ in range(n)]
    main2 = [[() for _ in range(n)] for _ in range(n)]
    for r in range(n):
        for c in range(n):
            sr, tr, sc, tc, nr, nc = range(nxt, nxt + 6)
            p = list(range(nxt + 6, nxt + 6 + T))
            qv = list(range(nxt + 6 + T, nxt + 6 + 2 * T))
            p2 = list(range(nxt + 6 + 2 * T, nxt + 6 + 3 * T))
            q2 = list(range(nxt + 6 + 3 * T, nxt + 6 + 4 * T))
            nxt += 6 + 4 * T
            ports[r, c] = (sr, tr, sc, tc)
            slope1 = mpq(1 - bm.U[r][c])
            slope2 = mpq(1 - bm.V[r][c])
            main1[r][c] = tuple(add(p[t], qv[t], (slope1, mpq(0)), (delta, mpq(0))) for t in range(T))
            main2[r][c] = tuple(add(p2[t], q2[t], (delta, mpq(0)), (slope2, mpq(0))) for t in range(T))
            for t in range(T):
                add_aux(sr, p[t], 1)
            for t in range(T):
                add_aux(qv[t], nr, 1)
            add_aux(nr, p2[0], 1)
            for t in range(T - 1):
                add_aux(q2[t], p2[t + 1], 1)
            add_aux(q2[T - 1], tr, 1)
            add_aux(sc, p[0], 2)
            for t in range(T - 1):
                add_aux(qv[t], p[t + 1], 2)
            add_aux(qv[T - 1], nc, 2)
            for t in range(T):
                add_aux(nc, p2[t], 2)
            for t in range(T - 1):
                add_aux(q2[t], q2[t + 1], 2)
            add_aux(q2[T - 1], tc, 2)
    row_entries, col_entries = [], []
    for r in range(n):
        row_entries.append(len(edges))
        add_aux(s1, ports[r, 0][0], 1)
        for c in range(n - 1):
            add_aux(ports[r, c][1], ports[r, c + 1][0], 1)
        add_aux(ports[r, n - 1][1], t1, 1)
    for c in range(n):
        col_entries.append(len(edges))
        add_aux(s2, ports[0, c][2], 2)
        for r in range(n - 1):
            add_aux(ports[r, c][3], ports[r + 1, c][2], 2)
        add_aux(ports[n - 1, c][3], t2, 2)
    slope = tuple(a for a, _ in cost1) + tuple(a for a, _ in cost2)
    offset = tuple(b for _, b in cost1) + tuple(b for _, b in cost2)
    commodities = (Commodity(s1, t1, mpq(1)), Commodity(s2, t2, mpq(1)))
    game = Game(nxt, tuple(edges), commodities, slope, offset)
    layout = GadgetLayout(
        n, T, tuple(row_entries), tuple(col_entries),
        tuple(map(tuple, main1)), tuple(map(tuple, main2)), tuple(aux1), tuple(aux2), bm,
    )
    return game, layout


@dataclass(frozen=True)
class ExtractedProfile:
    y: tuple[mpq, ...]
    z: tuple[mpq, ...]
    epsilon: mpq  # largest gain from a pure deviation by either player


def extract_bimatrix_strategies(layout: GadgetLayout, x, bm: BimatrixGame | None = None) -> ExtractedProfile:
    """Row and column mixtures read off the entry edges, with the achieved approximation."""
    bm = bm or layout.bimatrix
    if bm is None:
        raise ValueError("layout carries no bimatrix game; pass one explicitly")
    xs = [q(v) for v in x]
    m = len(xs) // 2
    y = tuple(xs[e] for e in layout.row_entries)
    z = tuple(xs[m + e] for e in layout.col_entries)
    n = layout.n
    uz = [sum((bm.U[r][c] * z[c] for c in range(n)), mpq(0)) for r in range(n)]
    vy = [sum((bm.V[r][c] * y[r] for r in range(n)), mpq(0)) for c in range(n)]
    pay1 = sum((y[r] * uz[r] for r in range(n)), mpq(0))
    pay2 = sum((z[c] * vy[c] for c in range(n)), mpq(0))
    eps = max(max(uz) - pay1, max(vy) - pay2, mpq(0))
    return ExtractedProfile(y, z, eps)
