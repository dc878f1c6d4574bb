"""Game instances, flow arithmetic and the independent equilibrium verifier.

Vectors indexed by (edge, player) or (vertex, player) are stored player-major:
entry ``i * m + e`` holds edge ``e`` of player ``i`` and entry ``i * n + v``
holds vertex ``v`` of player ``i``.  Edges, vertices and players are 0-based.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Sequence

import networkx as nx
from gmpy2 import mpq

from .rational import ZERO, q

Edge = tuple[int, int]


@dataclass(frozen=True)
class Commodity:
    source: int
    sink: int
    rate: mpq

    def __post_init__(self) -> None:
        if self.source == self.sink:
            raise ValueError("source and sink must differ")
        if self.rate < 0:
            raise ValueError("rate must be nonnegative")


@dataclass(frozen=True)
class Game:
    """Directed graph, commodities and affine costs ``a * load + b`` per (edge, player)."""

    n: int
    edges: tuple[Edge, ...]
    commodities: tuple[Commodity, ...]
    slope: tuple[mpq, ...]
    offset: tuple[mpq, ...]
    mode: str = "exact"
    tolerance: mpq = field(default_factory=lambda: mpq(1, 10**9))

    def __post_init__(self) -> None:
        mk = self.m * self.k
        if self.k < 1:
            raise ValueError("at least one player is required")
        if len(self.slope) != mk or len(self.offset) != mk:
            raise ValueError(f"cost tables need {mk} entries")
        for tail, head in self.edges:
            if not (0 <= tail < self.n and 0 <= head < self.n) or tail == head:
                raise ValueError(f"bad edge ({tail}, {head})")
        for c in self.commodities:
            if not (0 <= c.source < self.n and 0 <= c.sink < self.n):
                raise ValueError("commodity endpoint out of range")
        if any(a <= 0 for a in self.slope):
            raise ValueError("slopes must be positive")
        if any(b < 0 for b in self.offset):
            raise ValueError("offsets must be nonnegative")
        if self.mode not in ("exact", "float"):
            raise ValueError(f"unknown arithmetic mode {self.mode!r}")

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def k(self) -> int:
        return len(self.commodities)

    def index(self, e: int, i: int) -> int:
        return i * self.m + e

    def a(self, e: int, i: int) -> mpq:
        return self.slope[i * self.m + e]

    def b(self, e: int, i: int) -> mpq:
        return self.offset[i * self.m + e]

    @property
    def player_independent(self) -> bool:
        m = self.m
        return all(
            self.slope[i * m + e] == self.slope[e] and self.offset[i * m + e] == self.offset[e]
            for i in range(1, self.k)
            for e in range(m)
        )

    def incidence(self) -> list[list[int]]:
        """n x m matrix with +1 where the edge leaves a vertex and -1 where it enters."""
        gamma = [[0] * self.m for _ in range(self.n)]
        for e, (tail, head) in enumerate(self.edges):
            gamma[tail][e] = 1
            gamma[head][e] = -1
        return gamma

    def with_mode(self, mode: str, tolerance: object | None = None) -> "Game":
        tol = self.tolerance if tolerance is None else q(tolerance)
        return Game(self.n, self.edges, self.commodities, self.slope, self.offset, mode, tol)


def make_game(
    n: int,
    edges: Sequence[Edge],
    commodities: Sequence[tuple[int, int, object]],
    slope: Sequence[object],
    offset: Sequence[object],
    mode: str = "exact",
) -> Game:
    """Convenience constructor accepting plain Python numbers or strings."""
    return Game(
        n,
        tuple((int(t), int(h)) for t, h in edges),
        tuple(Commodity(int(s), int(t), q(r)) for s, t, r in commodities),
        tuple(q(a) for a in slope),
        tuple(q(b) for b in offset),
        mode,
    )


def aggregate_flow(x: Sequence[mpq], edge_count: int) -> list[mpq]:
    if edge_count <= 0 or len(x) % edge_count:
        raise ValueError(f"flow of length {len(x)} does not split into blocks of {edge_count}")
    k = len(x) // edge_count
    return [sum((x[i * edge_count + e] for i in range(k)), ZERO) for e in range(edge_count)]


def _check_flow(game: Game, x: Sequence[mpq]) -> None:
    if len(x) != game.m * game.k:
        raise ValueError(f"flow has length {len(x)}, expected {game.m * game.k}")


def marginal_cost(game: Game, x: Sequence[mpq], e: int, i: int) -> mpq:
    _check_flow(game, x)
    total = sum((x[j * game.m + e] for j in range(game.k)), ZERO)
    a = game.a(e, i)
    return a * total + game.b(e, i) + a * x[game.index(e, i)]


def player_cost(game: Game, x: Sequence[mpq], i: int) -> mpq:
    _check_flow(game, x)
    totals = aggregate_flow(x, game.m)
    cost = ZERO
    for e in range(game.m):
        xe = x[game.index(e, i)]
        if xe:
            cost += xe * (game.a(e, i) * totals[e] + game.b(e, i))
    return cost


def excess(game: Game, x: Sequence[mpq]) -> list[mpq]:
    """Outflow minus inflow for every (vertex, player)."""
    _check_flow(game, x)
    n, m = game.n, game.m
    y = [ZERO] * (n * game.k)
    for i in range(game.k):
        for e, (tail, head) in enumerate(game.edges):
            xe = x[i * m + e]
            if xe:
                y[i * n + tail] += xe
                y[i * n + head] -= xe
    return y


def demand_excess(game: Game, lam: mpq) -> list[mpq]:
    """Excess a feasible flow for demands ``lam * r`` must have."""
    y = [ZERO] * (game.n * game.k)
    for i, c in enumerate(game.commodities):
        y[i * game.n + c.source] += lam * c.rate
        y[i * game.n + c.sink] -= lam * c.rate
    return y


@dataclass
class VerificationReport:
    passed: bool
    tolerance: mpq
    conservation: list[tuple[int, int, mpq]]
    negativity: list[tuple[int, int, mpq]]
    potential: list[tuple[int, int, mpq]]
    potentials: list[list[mpq | None]]
    max_violation: mpq

    def summary(self) -> str:
        verdict = "pass" if self.passed else "fail"
        return (
            f"{verdict}: {len(self.conservation)} conservation, {len(self.negativity)} negativity, "
            f"{len(self.potential)} potential violations (max {float(self.max_violation):.3g})"
        )


def _shortest_distances(n: int, source: int, arcs: list[tuple[int, int, mpq]]) -> list[mpq | None]:
    out: list[list[tuple[int, mpq]]] = [[] for _ in range(n)]
    for tail, head, length in arcs:
        out[tail].append((head, length))
    dist: list[mpq | None] = [None] * n
    heap: list[tuple[mpq, int]] = [(ZERO, source)]
    while heap:
        d, v = heapq.heappop(heap)
        if dist[v] is not None:
            continue
        dist[v] = d
        for w, length in out[v]:
            if dist[w] is None:
                heapq.heappush(heap, (d + length, w))
    return dist


def verify_equilibrium(
    game: Game, x: Sequence[object], lam: object, tolerance: object = 0
) -> VerificationReport:
    """Check feasibility for demands ``lam * r`` and the shortest-path potential conditions.

    Potentials are built per player by Dijkstra on marginal-cost lengths; a used
    edge whose marginal cost exceeds its potential difference is a violation.
    Never raises on a non-equilibrium; the verdict lives in the report.
    """
    tol = q(tolerance)
    lam = q(lam)
    xs = [q(v) for v in x]
    _check_flow(game, xs)
    n, m = game.n, game.m
    y = excess(game, xs)
    want = demand_excess(game, lam)
    conservation = []
    for idx, (got, need) in enumerate(zip(y, want)):
        gap = abs(got - need)
        if gap > tol:
            conservation.append((idx // n, idx % n, gap))
    negativity = [(idx // m, idx % m, -v) for idx, v in enumerate(xs) if -v > tol]
    totals = aggregate_flow(xs, m)
    potential = []
    potentials = []
    worst = max([g for _, _, g in conservation + negativity], default=ZERO)
    for i, c in enumerate(game.commodities):
        mu = []
        for e in range(m):
            a = game.a(e, i)
            mu.append(a * totals[e] + game.b(e, i) + a * xs[i * m + e])
        arcs = [(t, h, max(mu[e], ZERO)) for e, (t, h) in enumerate(game.edges)]
        dist = _shortest_distances(n, c.source, arcs)
        potentials.append(dist)
        for e, (tail, head) in enumerate(game.edges):
            if xs[i * m + e] <= tol:
                continue
            if dist[tail] is None or dist[head] is None:
                gap = mu[e] + 1
            else:
                gap = dist[tail] + mu[e] - dist[head]
            if gap > tol:
                potential.append((i, e, gap))
                worst = max(worst, gap)
    passed = not (conservation or negativity or potential)
    return VerificationReport(passed, tol, conservation, negativity, potential, potentials, worst)


def strongly_connect(game: Game, big: object = 10**6) -> Game:
    """Append edges of slope 1 and offset ``big`` until the graph is strongly connected.

    Works on the condensation: every sink component gets an edge back to the
    first source component, and one sink reachable from that hub gets an edge
    to every other source component.  Original edges keep their indices.
    """
    big = q(big)
    graph = nx.DiGraph()
    graph.add_nodes_from(range(game.n))
    graph.add_edges_from(game.edges)
    if nx.is_strongly_connected(graph):
        return game
    cond = nx.condensation(graph)
    rep = {c: min(cond.nodes[c]["members"]) for c in cond.nodes}
    sources = sorted((c for c in cond.nodes if cond.in_degree(c) == 0), key=rep.get)
    sinks = sorted((c for c in cond.nodes if cond.out_degree(c) == 0), key=rep.get)
    hub = sources[0]
    reach = nx.descendants(cond, hub) | {hub}
    anchor = next(c for c in sinks if c in reach)
    added: list[Edge] = []
    for c in sinks:
        added.append((rep[c], rep[hub]))
    for c in sources[1:]:
        added.append((rep[anchor], rep[c]))
    added = list(dict.fromkeys(e for e in added if e[0] != e[1]))
    m, k = game.m, game.k
    slope, offset = [], []
    for i in range(k):
        slope += list(game.slope[i * m:(i + 1) * m]) + [mpq(1)] * len(added)
        offset += list(game.offset[i * m:(i + 1) * m]) + [big] * len(added)
    return Game(
        game.n, game.edges + tuple(added), game.commodities, tuple(slope), tuple(offset),
        game.mode, game.tolerance,
    )
