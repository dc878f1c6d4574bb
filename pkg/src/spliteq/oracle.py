"""Independent equilibrium oracles for small instances.

Nothing here touches the homotopy solver's linear algebra.  Three routes:

* best responses.  On parallel links a player's problem is solved in closed
  form by water-filling.  Given the others' loads o_e, player i's marginal
  cost on link e is 2 a_e x_e + (a_e o_e + b_e).  Links are sorted by that
  offset and opened one at a time while the common marginal level exceeds
  the next offset, which is the KKT condition of the separable convex
  problem.  On general graphs the player's quadratic program is solved with
  SLSQP and then polished by an exact-support KKT solve.
* potential minimization for player-independent costs.  The equilibrium
  minimizes sum_e (a x_e^2 / 2 + b x_e + a / 2 sum_i (x_e^i)^2), whose KKT
  conditions are the equilibrium conditions.
* exhaustive support enumeration in exact rationals (``fractions``), for
  tiny instances only.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import BudgetExceeded, NoConverge, UnsupportedCosts
from .game import Game, verify_equilibrium

MODES = ("best-response", "potential-min", "exhaustive-support")


@dataclass(frozen=True)
class OracleConfig:
    max_iterations: int = 2000
    steps: tuple[Fraction, ...] = (Fraction(1),)  # damping per round; the last entry repeats
    tolerance: Fraction = Fraction(1, 10**9)
    mode: str = "best-response"

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if not self.steps or any(s <= 0 or s > 1 for s in self.steps):
            raise ValueError("steps must lie in (0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"unknown oracle mode {self.mode!r}")

    def step(self, t: int) -> float:
        return float(self.steps[min(t, len(self.steps) - 1)])


@dataclass
class _Data:
    """Float copy of a game, so the oracle shares no arithmetic with the solver."""

    n: int
    m: int
    k: int
    tails: np.ndarray
    heads: np.ndarray
    a: np.ndarray  # k x m
    b: np.ndarray
    sources: list[int]
    sinks: list[int]
    rates: np.ndarray

    @classmethod
    def of(cls, game: Game) -> "_Data":
        m, k = game.m, game.k
        return cls(
            game.n, m, k,
            np.array([t for t, _ in game.edges]), np.array([h for _, h in game.edges]),
            np.array([float(v) for v in game.slope]).reshape(k, m),
            np.array([float(v) for v in game.offset]).reshape(k, m),
            [c.source for c in game.commodities], [c.sink for c in game.commodities],
            np.array([float(c.rate) for c in game.commodities]),
        )

    def marginal(self, x: np.ndarray) -> np.ndarray:
        load = x.sum(axis=0)
        return self.a * (load + x) + self.b

    def demand(self, i: int, lam: float) -> np.ndarray:
        y = np.zeros(self.n)
        y[self.sources[i]] += lam * self.rates[i]
        y[self.sinks[i]] -= lam * self.rates[i]
        return y


def is_parallel_links(game: Game) -> bool:
    ends = set(game.edges)
    if len(ends) != 1:
        return False
    (tail, head), = ends
    return all(c.source == tail and c.sink == head for c in game.commodities)


def water_fill(offsets: Sequence, slopes: Sequence, demand):
    """Minimize sum_e (slopes_e / 2 x_e^2 + offsets_e x_e) subject to sum x = demand, x >= 0.

    Works in whatever number type the inputs use, so ``Fraction`` inputs give
    exact results.
    """
    order = sorted(range(len(offsets)), key=lambda e: offsets[e])
    x = [demand * 0] * len(offsets)
    if demand == 0:
        return x
    weight = ratio = 0
    for pos, e in enumerate(order):
        weight += 1 / slopes[e]
        ratio += offsets[e] / slopes[e]
        level = (demand + ratio) / weight
        if pos + 1 == len(order) or level <= offsets[order[pos + 1]]:
            break
    for e in order[: pos + 1]:
        x[e] = (level - offsets[e]) / slopes[e]
    return x


def _dijkstra(n: int, source: int, tails, heads, lengths) -> np.ndarray:
    out: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for t, h, w in zip(tails, heads, lengths):
        out[t].append((h, max(float(w), 0.0)))
    dist = np.full(n, np.inf)
    heap = [(0.0, source)]
    while heap:
        d, v = heapq.heappop(heap)
        if d >= dist[v]:
            continue
        dist[v] = d
        for w, length in out[v]:
            if d + length < dist[w]:
                heapq.heappush(heap, (d + length, w))
    return dist


def _kkt_solve(data: _Data, lam: float, x: np.ndarray, players: Sequence[int], active: set) -> np.ndarray:
    """Equilibrium conditions of ``players`` with all other flows fixed, on a guessed support."""
    n, m = data.n, data.m
    free = sorted(active)
    col = {pair: j for j, pair in enumerate(free)}
    pcol = {i: len(free) + r * n for r, i in enumerate(players)}
    size = len(free) + n * len(players)
    rows, rhs = [], []
    fixed = x.copy()
    for i in players:
        fixed[i] = 0.0
    fixed_load = fixed.sum(axis=0)
    for (i, e) in free:
        row = np.zeros(size)
        a = data.a[i, e]
        for j in players:
            if (j, e) in col:
                row[col[(j, e)]] += a
        row[col[(i, e)]] += a
        row[pcol[i] + data.heads[e]] -= 1
        row[pcol[i] + data.tails[e]] += 1
        rows.append(row)
        rhs.append(-(a * fixed_load[e] + data.b[i, e]))
    for i in players:
        y = data.demand(i, lam)
        for v in range(n):
            row = np.zeros(size)
            for e in range(m):
                if (i, e) in col:
                    if data.tails[e] == v:
                        row[col[(i, e)]] += 1
                    if data.heads[e] == v:
                        row[col[(i, e)]] -= 1
            rows.append(row)
            rhs.append(y[v])
        row = np.zeros(size)
        row[pcol[i] + data.sources[i]] = 1
        rows.append(row)
        rhs.append(0.0)
    sol = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)[0]
    result = x.copy()
    for i in players:
        result[i] = 0.0
    for pair, j in col.items():
        result[pair] = sol[j]
    return result


def _polish(data: _Data, lam: float, x: np.ndarray, players: Sequence[int], rounds: int = 60) -> np.ndarray:
    """Active-set refinement: solve on a support guess, drop negative flows, add undercut edges."""
    scale = max(1.0, float(np.abs(x).max()))
    active = {(i, e) for i in players for e in range(data.m) if x[i, e] > 1e-7 * scale}
    seen = set()
    for _ in range(rounds):
        y = _kkt_solve(data, lam, x, players, active)
        mu = data.marginal(y)
        change = set()
        for i in players:
            neg = [(i, e) for e in range(data.m) if (i, e) in active and y[i, e] < -1e-12 * scale]
            change.update(neg)
            dist = _dijkstra(data.n, data.sources[i], data.tails, data.heads, mu[i])
            slack = dist[data.tails] + np.maximum(mu[i], 0.0) - dist[data.heads]
            used = [e for e in range(data.m) if (i, e) in active]
            if any(np.isfinite(slack[e]) and slack[e] > 1e-12 * scale for e in used) or not used:
                tight = [e for e in range(data.m) if (i, e) not in active
                         and np.isfinite(slack[e]) and slack[e] <= 1e-12 * scale]
                change.update((i, e) for e in tight)
        if not change:
            return np.maximum(y, 0.0)
        active ^= change
        key = frozenset(active)
        if key in seen:
            break
        seen.add(key)
    return np.maximum(y, 0.0)


def _path_flow(data: _Data, i: int, lengths: np.ndarray, amount: float) -> np.ndarray:
    """All of ``amount`` on one shortest source-sink path; a feasible start for SLSQP."""
    out: list[list[int]] = [[] for _ in range(data.n)]
    for e in range(data.m):
        out[data.tails[e]].append(e)
    dist = np.full(data.n, np.inf)
    via = [-1] * data.n
    heap = [(0.0, data.sources[i], -1)]
    while heap:
        d, v, e = heapq.heappop(heap)
        if d >= dist[v]:
            continue
        dist[v], via[v] = d, e
        for f in out[v]:
            heapq.heappush(heap, (d + max(float(lengths[f]), 0.0), data.heads[f], f))
    z = np.zeros(data.m)
    v = data.sinks[i]
    if not np.isfinite(dist[v]):
        return z
    while v != data.sources[i]:
        z[via[v]] += amount
        v = data.tails[via[v]]
    return z


def _frac(value) -> Fraction:
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, (int, str, Fraction)):
        return Fraction(value)
    return Fraction(int(value.numerator), int(value.denominator))


def _as_array(game: Game, x) -> np.ndarray:
    if x is None:
        return np.zeros((game.k, game.m))
    return np.array([float(v) for v in x]).reshape(game.k, game.m)


def _flat(x: np.ndarray) -> list[float]:
    return [float(v) for v in x.reshape(-1)]


def _conservation(data: _Data, i: int) -> tuple[np.ndarray, np.ndarray]:
    rows = np.zeros((data.n - 1, data.m))
    keep = [v for v in range(data.n) if v != data.sinks[i]]
    for r, v in enumerate(keep):
        rows[r, data.tails == v] += 1
        rows[r, data.heads == v] -= 1
    return rows, keep


def _general_response(data: _Data, x: np.ndarray, i: int, lam: float) -> np.ndarray:
    others = x.sum(axis=0) - x[i]
    a, c = data.a[i], data.a[i] * others + data.b[i]
    rows, keep = _conservation(data, i)
    target = data.demand(i, lam)[keep]
    start = np.maximum(x[i], 0.0)
    if np.abs(rows @ start - target).max(initial=0.0) > 1e-9 * max(1.0, float(np.abs(target).max(initial=0.0))):
        start = _path_flow(data, i, data.marginal(x)[i], lam * data.rates[i])
    res = minimize(
        lambda z: float(a @ (z * z) + c @ z),
        start,
        jac=lambda z: 2 * a * z + c,
        bounds=[(0, None)] * data.m,
        constraints=[{"type": "eq", "fun": lambda z: rows @ z - target, "jac": lambda z: rows}],
        method="SLSQP",
        options={"maxiter": 500, "ftol": 1e-14},
    )
    guess = x.copy()
    guess[i] = res.x
    return _polish(data, lam, guess, [i])[i]


def best_response(game: Game, x, i: int, lam: object = 1, config: OracleConfig | None = None) -> list:
    """Player ``i``'s cost-minimizing flow of rate ``lam * r_i`` against the others' flows.

    Parallel links are solved exactly in ``Fraction``; other graphs return floats.
    """
    config = config or OracleConfig()
    m = game.m
    if is_parallel_links(game):
        xs = [_frac(v) for v in x]
        lam_q = _frac(lam)
        others = [sum(xs[j * m + e] for j in range(game.k) if j != i) for e in range(m)]
        slopes = [2 * Fraction(game.a(e, i)) for e in range(m)]
        offsets = [Fraction(game.a(e, i)) * others[e] + Fraction(game.b(e, i)) for e in range(m)]
        return water_fill(offsets, slopes, lam_q * Fraction(game.commodities[i].rate))
    data = _Data.of(game)
    return [float(v) for v in _general_response(data, _as_array(game, x), i, float(lam))]


def _verified(game: Game, x: list, lam, tolerance) -> bool:
    return verify_equilibrium(game, x, lam, tolerance).passed


def oracle_equilibrium(game: Game, lam: object = 1, config: OracleConfig | None = None) -> list[float]:
    """Round-robin best responses from zero flow until the profile stops moving."""
    config = config or OracleConfig()
    if config.mode == "potential-min":
        return potential_minimizer(game, lam, config)
    if config.mode == "exhaustive-support":
        found = exhaustive_support_scan(game, lam).equilibria
        if not found:
            raise NoConverge("support scan found no equilibrium")
        return [float(v) for v in found[0]]
    data = _Data.of(game)
    lam_f = float(lam)
    x = np.zeros((game.k, game.m))
    parallel = is_parallel_links(game)
    tol = float(config.tolerance)
    for t in range(config.max_iterations):
        step = config.step(t)
        move = 0.0
        for i in range(game.k):
            if parallel:
                others = x.sum(axis=0) - x[i]
                resp = np.array(water_fill(
                    list(data.a[i] * others + data.b[i]), list(2 * data.a[i]), lam_f * data.rates[i]
                ))
            else:
                resp = _general_response(data, x, i, lam_f)
            new = x[i] + step * (resp - x[i])
            move = max(move, float(np.abs(new - x[i]).max()))
            x[i] = new
        if move < tol * 1e-3:
            break
    polished = _polish(data, lam_f, x, range(game.k))
    for cand in (polished, x):
        flat = _flat(cand)
        if _verified(game, flat, lam, config.tolerance):
            return flat
    raise NoConverge(f"best responses did not settle within {config.max_iterations} rounds")


def potential_minimizer(game: Game, lam: object = 1, config: OracleConfig | None = None) -> list[float]:
    """Minimizer of the convex potential of a player-independent game."""
    config = config or OracleConfig()
    if not game.player_independent:
        raise UnsupportedCosts("potential minimization needs player-independent costs")
    data = _Data.of(game)
    lam_f = float(lam)
    k, m = game.k, game.m
    a, b = data.a[0], data.b[0]

    def phi(z: np.ndarray) -> float:
        x = z.reshape(k, m)
        load = x.sum(axis=0)
        return float(a @ (load * load) / 2 + b @ load + a @ (x * x).sum(axis=0) / 2)

    def grad(z: np.ndarray) -> np.ndarray:
        x = z.reshape(k, m)
        return (a * (x.sum(axis=0) + x) + b).reshape(-1)

    blocks, targets = [], []
    for i in range(k):
        rows, keep = _conservation(data, i)
        full = np.zeros((rows.shape[0], k * m))
        full[:, i * m:(i + 1) * m] = rows
        blocks.append(full)
        targets.append(data.demand(i, lam_f)[keep])
    eq = np.vstack(blocks)
    target = np.concatenate(targets)
    res = minimize(
        phi, np.zeros(k * m), jac=grad, bounds=[(0, None)] * (k * m),
        constraints=[{"type": "eq", "fun": lambda z: eq @ z - target, "jac": lambda z: eq}],
        method="SLSQP", options={"maxiter": config.max_iterations, "ftol": 1e-15},
    )
    x = res.x.reshape(k, m)
    for cand in (_polish(data, lam_f, x, range(k)), x):
        flat = _flat(cand)
        if _verified(game, flat, lam, config.tolerance):
            return flat
    raise NoConverge("potential minimization did not reach an equilibrium")


@dataclass
class ScanResult:
    """Distinct equilibrium flows, plus the supports whose systems were singular."""

    equilibria: list[tuple[Fraction, ...]] = field(default_factory=list)
    singular: list[tuple[frozenset, ...]] = field(default_factory=list)
    boundary: bool = False  # some equilibrium sits on a support boundary
    supports_tried: int = 0

    @property
    def degenerate(self) -> bool:
        return bool(self.singular) or self.boundary


def _spanning_subsets(n: int, edges: Sequence[tuple[int, int]]) -> list[frozenset]:
    out = []
    m = len(edges)
    for size in range(n - 1, m + 1):
        for subset in itertools.combinations(range(m), size):
            parent = list(range(n))

            def find(v: int) -> int:
                while parent[v] != v:
                    parent[v] = parent[parent[v]]
                    v = parent[v]
                return v

            parts = n
            for e in subset:
                ra, rb = find(edges[e][0]), find(edges[e][1])
                if ra != rb:
                    parent[ra] = rb
                    parts -= 1
            if parts == 1:
                out.append(frozenset(subset))
    return out


def _bridge_fixed(n: int, edges, subset: frozenset, e: int, s: int, t: int) -> bool:
    """Whether conservation alone forces the flow on ``e`` to zero within ``subset``."""
    adj: dict[int, list[int]] = {v: [] for v in range(n)}
    for f in subset:
        if f != e:
            u, v = edges[f]
            adj[u].append(v)
            adj[v].append(u)
    seen, stack = {edges[e][0]}, [edges[e][0]]
    while stack:
        for w in adj[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    if edges[e][1] in seen:
        return False
    return (s in seen) == (t in seen)


def _exact_solve(matrix: list[list[Fraction]], rhs: list[Fraction]) -> list[Fraction] | None:
    """Gaussian elimination over ``Fraction``; None when the matrix is singular."""
    size = len(matrix)
    rows = [row[:] + [r] for row, r in zip(matrix, rhs)]
    for c in range(size):
        piv = next((r for r in range(c, size) if rows[r][c] != 0), None)
        if piv is None:
            return None
        rows[c], rows[piv] = rows[piv], rows[c]
        inv = 1 / rows[c][c]
        rows[c] = [v * inv for v in rows[c]]
        for r in range(size):
            if r != c and rows[r][c] != 0:
                f = rows[r][c]
                rows[r] = [v - f * w for v, w in zip(rows[r], rows[c])]
    return [row[size] for row in rows]


def _support_system(game: Game, combo, src, dst, a, b, rates, zero):
    """Square system for one total support, in the number type of ``a``, ``b``, ``rates``."""
    n, m, k = game.n, game.m, game.k
    pairs = [(i, e) for i in range(k) for e in sorted(combo[i])]
    col = {p: j for j, p in enumerate(pairs)}
    pot = {}
    for i in range(k):
        for v in range(n):
            if v != src[i]:
                pot[(i, v)] = len(col) + len(pot)
    size = len(col) + len(pot)
    matrix = [[zero] * size for _ in range(size)]
    rhs = [zero] * size
    r = 0
    for (i, e) in pairs:
        coef = a[i * m + e]
        for j in range(k):
            if (j, e) in col:
                matrix[r][col[(j, e)]] += coef
        matrix[r][col[(i, e)]] += coef
        t, h = game.edges[e]
        if (i, h) in pot:
            matrix[r][pot[(i, h)]] -= 1
        if (i, t) in pot:
            matrix[r][pot[(i, t)]] += 1
        rhs[r] = -b[i * m + e]
        r += 1
    for i in range(k):
        for v in range(n):
            if v == src[i]:
                continue
            for e in combo[i]:
                t, h = game.edges[e]
                if t == v:
                    matrix[r][col[(i, e)]] += 1
                if h == v:
                    matrix[r][col[(i, e)]] -= 1
            rhs[r] = -rates[i] if v == dst[i] else zero
            r += 1
    return matrix, rhs, col, pot


def _plausible(game: Game, combo, sol, col, pot, a, b) -> bool:
    """Float screen: nonnegative active flows and no clearly undercut inactive edge."""
    n, m, k = game.n, game.m, game.k
    if any(sol[j] < -1e-7 for j in col.values()):
        return False
    x = np.zeros((k, m))
    for (i, e), j in col.items():
        x[i, e] = sol[j]
    load = x.sum(axis=0)
    for i in range(k):
        pi = [sol[pot[(i, v)]] if (i, v) in pot else 0.0 for v in range(n)]
        for e in range(m):
            if e not in combo[i]:
                t, h = game.edges[e]
                if a[i * m + e] * load[e] + b[i * m + e] - (pi[h] - pi[t]) < -1e-7:
                    return False
    return True


def exhaustive_support_scan(game: Game, lam: object = 1, limit: int = 18) -> ScanResult:
    """Every equilibrium at demand ``lam * r`` found by solving each total support's linear system.

    A total support gives each player a weakly spanning connected edge set.
    On it the tension equalities and conservation form a square system in the
    active flows and the non-source potentials.  Solutions with nonnegative
    flows and no undercut inactive edge are equilibria; equal flows from
    different supports are merged.  A float solve screens each support and the
    survivors are re-solved exactly.
    """
    if game.m * game.k > limit:
        raise BudgetExceeded(f"support scan limited to mk <= {limit}, got {game.m * game.k}")
    n, m, k = game.n, game.m, game.k
    lam_q = _frac(lam)
    a = [_frac(v) for v in game.slope]
    b = [_frac(v) for v in game.offset]
    rates = [_frac(c.rate) * lam_q for c in game.commodities]
    af, bf, rf = [float(v) for v in a], [float(v) for v in b], [float(v) for v in rates]
    src = [c.source for c in game.commodities]
    dst = [c.sink for c in game.commodities]
    per_player = _spanning_subsets(n, game.edges)
    result = ScanResult()
    found: dict[tuple[Fraction, ...], None] = {}
    for combo in itertools.product(per_player, repeat=k):
        result.supports_tried += 1
        matrix_f, rhs_f, col, pot = _support_system(game, combo, src, dst, af, bf, rf, 0.0)
        dense = np.array(matrix_f)
        if np.linalg.cond(dense) < 1e10:
            if not _plausible(game, combo, np.linalg.solve(dense, np.array(rhs_f)), col, pot, af, bf):
                continue
        matrix, rhs, _, _ = _support_system(game, combo, src, dst, a, b, rates, Fraction(0))
        sol = _exact_solve(matrix, rhs)
        if sol is None:
            result.singular.append(tuple(combo))
            continue
        x = [Fraction(0)] * (k * m)
        for (i, e), j in col.items():
            x[i * m + e] = sol[j]
        if any(v < 0 for v in x):
            continue
        pi = [[sol[pot[(i, v)]] if (i, v) in pot else Fraction(0) for v in range(n)] for i in range(k)]
        load = [sum(x[i * m + e] for i in range(k)) for e in range(m)]
        on_boundary = False
        feasible = True
        for i in range(k):
            for e in range(m):
                t, h = game.edges[e]
                mu = a[i * m + e] * (load[e] + x[i * m + e]) + b[i * m + e]
                gap = mu - (pi[i][h] - pi[i][t])
                if e in combo[i]:
                    if x[i * m + e] == 0 and not _bridge_fixed(n, game.edges, combo[i], e, src[i], dst[i]):
                        on_boundary = True
                elif gap < 0:
                    feasible = False
                elif gap == 0:
                    on_boundary = True
        if not feasible:
            continue
        result.boundary |= on_boundary
        found.setdefault(tuple(x), None)
    result.equilibria = sorted(found)
    return result
