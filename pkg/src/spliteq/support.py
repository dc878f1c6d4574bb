"""Supports, their coefficient matrices and the block Laplacian.

Internally the incidence orientation is head +1 / tail -1, so the transpose
applied to a potential gives ``pi_head - pi_tail`` per (edge, player) and the
incidence applied to a flow gives inflow minus outflow.  The excess direction
is therefore ``-r`` at a player's source and ``+r`` at its sink.  The public
``game.excess`` uses the opposite (outflow minus inflow) sign.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from gmpy2 import mpq

from .errors import DegenerateSupport, NonTotalSupport
from .game import Game
from .linalg import gauss_jordan, matvec
from .rational import ONE, ZERO


@dataclass(frozen=True)
class Support:
    """Active flags for every (edge, player), player-major."""

    m: int
    k: int
    active: tuple[bool, ...]

    @classmethod
    def from_pairs(cls, m: int, k: int, pairs: Iterable[tuple[int, int]]) -> "Support":
        flags = [False] * (m * k)
        for e, i in pairs:
            flags[i * m + e] = True
        return cls(m, k, tuple(flags))

    @classmethod
    def full(cls, m: int, k: int) -> "Support":
        return cls(m, k, (True,) * (m * k))

    def is_active(self, e: int, i: int) -> bool:
        return self.active[i * self.m + e]

    def players(self, e: int) -> list[int]:
        return [i for i in range(self.k) if self.active[i * self.m + e]]

    def kappa(self, e: int) -> int:
        return sum(self.active[i * self.m + e] for i in range(self.k))

    def sigma(self, e: int, i: int) -> int:
        return 1 if self.active[i * self.m + e] else -1

    def pairs(self) -> list[tuple[int, int]]:
        return [(idx % self.m, idx // self.m) for idx, on in enumerate(self.active) if on]

    def toggle(self, e: int, i: int) -> "Support":
        flags = list(self.active)
        flags[i * self.m + e] = not flags[i * self.m + e]
        return Support(self.m, self.k, tuple(flags))

    def fingerprint(self) -> str:
        bits = sum(1 << idx for idx, on in enumerate(self.active) if on)
        width = max(1, (len(self.active) + 3) // 4)
        return format(bits, f"0{width}x")


@dataclass(frozen=True)
class SupportMatrices:
    """Per-edge k x k blocks of C~ = (I - K Omega) A^-1 plus the active/sign pattern.

    C = Omega C~ zeroes inactive rows and W = Sigma C~ negates them; both are
    read off ``ctilde`` on demand rather than stored.
    """

    game: Game
    support: Support
    ctilde: tuple[tuple[tuple[mpq, ...], ...], ...]

    def c_block(self, e: int) -> list[list[mpq]]:
        s = self.support
        return [
            [v if s.is_active(e, i) else ZERO for v in row]
            for i, row in enumerate(self.ctilde[e])
        ]

    def w_row(self, e: int, i: int) -> tuple[mpq, ...]:
        row = self.ctilde[e][i]
        return row if self.support.is_active(e, i) else tuple(-v for v in row)

    def dense(self, which: str) -> list[list[mpq]]:
        """Full mk x mk matrix ``ctilde``, ``c`` or ``w``; for tests and small games."""
        game, s = self.game, self.support
        m, k = game.m, game.k
        out = [[ZERO] * (m * k) for _ in range(m * k)]
        for e in range(m):
            for i in range(k):
                scale = 1
                if which == "c":
                    scale = 1 if s.is_active(e, i) else 0
                elif which == "w":
                    scale = s.sigma(e, i)
                for j in range(k):
                    out[i * m + e][j * m + e] = scale * self.ctilde[e][i][j]
        return out


def ctilde_block(game: Game, support: Support, e: int) -> tuple[tuple[mpq, ...], ...]:
    k = game.k
    omega = [support.is_active(e, i) for i in range(k)]
    denom = support.kappa(e) + 1
    inv_a = [ONE / game.a(e, i) for i in range(k)]
    return tuple(
        tuple(
            (inv_a[i] if i == j else ZERO) - (inv_a[j] / denom if omega[j] else ZERO)
            for j in range(k)
        )
        for i in range(k)
    )


def build_support_matrices(game: Game, support: Support) -> SupportMatrices:
    if (support.m, support.k) != (game.m, game.k):
        raise ValueError("support shape does not match the game")
    return SupportMatrices(game, support, tuple(ctilde_block(game, support, e) for e in range(game.m)))


def tension(game: Game, pi: Sequence[mpq]) -> list[mpq]:
    """``pi_head - pi_tail`` for every (edge, player)."""
    n = game.n
    out = []
    for i in range(game.k):
        base = i * n
        out.extend(pi[base + h] - pi[base + t] for t, h in game.edges)
    return out


def incidence_apply(game: Game, z: Sequence[mpq]) -> list[mpq]:
    """Inflow minus outflow for an (edge, player) vector."""
    n, m = game.n, game.m
    y = [ZERO] * (n * game.k)
    for i in range(game.k):
        for e, (t, h) in enumerate(game.edges):
            v = z[i * m + e]
            if v:
                y[i * n + h] += v
                y[i * n + t] -= v
    return y


def apply_c(mats: SupportMatrices, z: Sequence[mpq], which: str = "c") -> list[mpq]:
    """Multiply an (edge, player) vector by C, C~ or W."""
    game, s = mats.game, mats.support
    m, k = game.m, game.k
    out = [ZERO] * (m * k)
    for e in range(m):
        block = mats.ctilde[e]
        zs = [z[j * m + e] for j in range(k)]
        for i in range(k):
            active = s.is_active(e, i)
            if which == "c" and not active:
                continue
            v = sum((block[i][j] * zs[j] for j in range(k) if zs[j]), ZERO)
            if which == "w" and not active:
                v = -v
            out[i * m + e] = v
    return out


def apply_c_transpose(mats: SupportMatrices, z: Sequence[mpq]) -> list[mpq]:
    """Multiply an (edge, player) vector by the transpose of C."""
    game, s = mats.game, mats.support
    m, k = game.m, game.k
    out = [ZERO] * (m * k)
    for e in range(m):
        block = mats.ctilde[e]
        for i in range(k):
            zi = z[i * m + e]
            if zi and s.is_active(e, i):
                for j in range(k):
                    out[j * m + e] += block[i][j] * zi
    return out


def induced_flow(mats: SupportMatrices, pi: Sequence[mpq]) -> list[mpq]:
    """Flow x = C (G^T pi - b) whose active marginal costs equal the potential differences."""
    game = mats.game
    z = [t - b for t, b in zip(tension(game, pi), game.offset)]
    return apply_c(mats, z, "c")


def total_flow_check(mats: SupportMatrices, pi: Sequence[mpq], e: int, i: int = 0) -> mpq:
    """Total flow on ``e`` from player ``i``'s row of K Omega A^-1 (G^T pi - b).

    Rows of K Omega agree across players, so ``i`` does not change the value.
    """
    game, s = mats.game, mats.support
    tens = tension(game, pi)
    denom = s.kappa(e) + 1
    total = ZERO
    for j in s.players(e):
        idx = game.index(e, j)
        total += (tens[idx] - game.offset[idx]) / game.slope[idx]
    return total / denom


def is_total(game: Game, support: Support) -> bool:
    for i in range(game.k):
        parent = list(range(game.n))

        def find(v: int) -> int:
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        parts = game.n
        for e, (t, h) in enumerate(game.edges):
            if support.is_active(e, i):
                rt, rh = find(t), find(h)
                if rt != rh:
                    parent[rt] = rh
                    parts -= 1
        if parts != 1:
            return False
    return True


def _weak_components(n: int, edges: Sequence[tuple[int, int]], skip: tuple[int, int]) -> list[int]:
    parent = list(range(n))

    def find(v: int) -> int:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for idx, (t, h) in enumerate(edges):
        if idx in skip:
            continue
        rt, rh = find(t), find(h)
        if rt != rh:
            parent[rt] = rh
    return [find(v) for v in range(n)]


def closer_than(n: int, edges: Sequence[tuple[int, int]], anchor: int, e: int, f: int) -> bool:
    """True if some vertex set avoiding ``anchor`` is entered only by ``e`` and left only by ``f``.

    With both edges removed the set must be a union of weak components, so it
    exists iff the components holding head(e) and tail(f) avoid those holding
    tail(e), head(f) and the anchor.
    """
    if e == f:
        return False
    comp = _weak_components(n, edges, (e, f))
    inside = {comp[edges[e][1]], comp[edges[f][0]]}
    outside = {comp[edges[e][0]], comp[edges[f][1]], comp[anchor]}
    return not (inside & outside)


def serial_dependent_pairs(
    n: int, edges: Sequence[tuple[int, int]], anchor: int
) -> list[tuple[int, int]]:
    """All ordered (closer, farther) serial-dependent edge pairs relative to ``anchor``."""
    return [
        (e, f)
        for e in range(len(edges))
        for f in range(len(edges))
        if closer_than(n, edges, anchor, e, f)
    ]


def is_shortest_path_support(game: Game, support: Support) -> bool:
    if not is_total(game, support):
        return False
    for i, c in enumerate(game.commodities):
        for e, _ in serial_dependent_pairs(game.n, game.edges, c.source):
            if not support.is_active(e, i):
                return False
    return True


def laplacian_matrix(mats: SupportMatrices) -> list[list[mpq]]:
    game = mats.game
    n, k = game.n, game.k
    size = n * k
    lap = [[ZERO] * size for _ in range(size)]
    for e, (t, h) in enumerate(game.edges):
        block = mats.c_block(e)
        for i in range(k):
            row = block[i]
            for j in range(k):
                c = row[j]
                if not c:
                    continue
                ih, it, jh, jt = i * n + h, i * n + t, j * n + h, j * n + t
                lap[ih][jh] += c
                lap[ih][jt] -= c
                lap[it][jh] -= c
                lap[it][jt] += c
    return lap


def excess_direction(game: Game) -> list[mpq]:
    dy = [ZERO] * (game.n * game.k)
    for i, c in enumerate(game.commodities):
        dy[i * game.n + c.source] -= c.rate
        dy[i * game.n + c.sink] += c.rate
    return dy


def offset_excess(mats: SupportMatrices) -> list[mpq]:
    """d = G C b."""
    return incidence_apply(mats.game, apply_c(mats, mats.game.offset, "c"))


def kept_coordinates(game: Game) -> list[int]:
    sources = {i * game.n + c.source for i, c in enumerate(game.commodities)}
    return [idx for idx in range(game.n * game.k) if idx not in sources]


@dataclass
class BlockLaplacian:
    """L = G C G^T for one support with its source-reduced inverse.

    ``inverse`` is the inverse of the reduced matrix with zero rows and
    columns re-inserted at the source coordinates; it is ``None`` when the
    reduced matrix is singular (``sign == 0``).
    """

    game: Game
    support: Support
    mats: SupportMatrices
    matrix: list[list[mpq]]
    sign: int
    rank: int
    inverse: list[list[mpq]] | None
    d: list[mpq]
    dy: list[mpq]
    dbar: list[mpq] | None = None
    dpi: list[mpq] | None = None
    fresh: bool = field(default=True)
    factor: mpq | None = None

    @property
    def reduced_size(self) -> int:
        return self.game.k * (self.game.n - 1)

    @property
    def rank_defect(self) -> int:
        return self.reduced_size - self.rank

    def refresh_directions(self) -> None:
        if self.inverse is None:
            self.dbar = self.dpi = None
            return
        self.dbar = matvec(self.inverse, self.d)
        self.dpi = matvec(self.inverse, self.dy)


def embed_inverse(game: Game, reduced_inverse: list[list[mpq]]) -> list[list[mpq]]:
    keep = kept_coordinates(game)
    size = game.n * game.k
    full = [[ZERO] * size for _ in range(size)]
    for a, ra in enumerate(keep):
        row = reduced_inverse[a]
        target = full[ra]
        for b, rb in enumerate(keep):
            target[rb] = row[b]
    return full


def build_block_laplacian(game: Game, support: Support) -> BlockLaplacian:
    if not is_total(game, support):
        raise NonTotalSupport("support is not total")
    mats = build_support_matrices(game, support)
    lap = laplacian_matrix(mats)
    keep = kept_coordinates(game)
    reduced = [[lap[a][b] for b in keep] for a in keep]
    elim = gauss_jordan(reduced)
    inverse = embed_inverse(game, elim.inverse) if elim.inverse is not None else None
    result = BlockLaplacian(
        game, support, mats, lap, elim.sign, elim.rank, inverse,
        offset_excess(mats), excess_direction(game),
    )
    result.refresh_directions()
    return result


def solve_potential(lap: BlockLaplacian, lam: object) -> list[mpq]:
    """The unique normalized potential with L pi - d = lam * dy."""
    if lap.sign == 0 or lap.dpi is None or lap.dbar is None:
        raise DegenerateSupport(f"reduced Laplacian has rank defect {lap.rank_defect}")
    lam = mpq(lam)
    return [lam * p + q for p, q in zip(lap.dpi, lap.dbar)]


@dataclass
class PotentialCheck:
    ok: bool
    laplace_residual: list[tuple[int, mpq]]
    violated_rows: list[tuple[int, int, mpq]]
    normalization: list[int]


def check_lambda_potential(game: Game, support: Support, pi: Sequence[object], lam: object) -> PotentialCheck:
    """Test L pi - d = lam dy, W (G^T pi - b) >= 0 and pi = 0 at every source."""
    lam = mpq(lam)
    pi = [mpq(v) for v in pi]
    mats = build_support_matrices(game, support)
    lap = laplacian_matrix(mats)
    d = offset_excess(mats)
    dy = excess_direction(game)
    lpi = matvec(lap, pi)
    residual = [(idx, v - dv - lam * y) for idx, (v, dv, y) in enumerate(zip(lpi, d, dy))]
    residual = [(idx, r) for idx, r in residual if r]
    z = [t - b for t, b in zip(tension(game, pi), game.offset)]
    rows = apply_c(mats, z, "w")
    violated = [(idx % game.m, idx // game.m, v) for idx, v in enumerate(rows) if v < 0]
    normal = [i for i, c in enumerate(game.commodities) if pi[i * game.n + c.source]]
    ok = not residual and not violated and not normal
    return PotentialCheck(ok, residual, violated, normal)
