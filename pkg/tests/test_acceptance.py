"""Acceptance criteria; each test prints one PASS/FAIL line."""

import random
import statistics
import time

import numpy as np
import pytest
from gmpy2 import mpq

from helpers import random_game, sgn, w_dot_direction
from spliteq.game import Game, verify_equilibrium
from spliteq.generators import (
    CoefficientRanges,
    extract_bimatrix_strategies,
    gen_complete,
    gen_example_8player,
    gen_gadget,
    gen_grid,
    gen_parallel_links,
    make_bimatrix,
)
from spliteq.homotopy import evaluate, solve_at, solve_player_independent, trace
from spliteq.oracle import exhaustive_support_scan, oracle_equilibrium, potential_minimizer
from spliteq.pivot import DegenerateNeighbor, Terminal, make_state, pred, succ
from spliteq.support import build_block_laplacian


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail

    return emit


def head(vec, size=4):
    return [vec[j] for j in range(size)]


def test_1_golden_trajectory(report):
    start = time.perf_counter()
    f = trace(gen_example_8player())
    elapsed = time.perf_counter() - start
    walk = f.walks[0] if f.walks else None
    third = mpq(1, 3)
    checks = {
        "pi0": head(f.breakpoints[0].potential) == [0, 6, 12, 3],
        "dpi0": head(f.path[0].delta_pi) == [0, 2, 4, 36],
        "pi1": f.breakpoints[1].lam == mpq(1, 2) and head(f.breakpoints[1].potential) == [0, 7, 14, 21],
        "direction": walk is not None and head(walk.direction) == [0, 1, 2, 3],
        "circulation": walk is not None
        and head(walk.circulation, 8) == [third, 0, third, 0, third, 0, 0, -third],
        "pi2": head(f.breakpoints[2].potential) == [0, 10, 20, 30],
        "dpi2": head(f.path[-1].delta_pi) == [0, 8, 16, 24],
        "pi3": f.breakpoints[3].lam == 1 and head(f.breakpoints[3].potential) == [0, 14, 28, 42],
        "flow": head(f.breakpoints[3].flow, 8) == [2, 0, 2, 0, 2, 0, 0, 0],
        "lambdas": f.lambdas == [0, mpq(1, 2), mpq(1, 2), 1],
        "runtime": elapsed < 5,
    }
    failed = [name for name, ok in checks.items() if not ok]
    report(1, not failed, f"golden trajectory in {elapsed:.2f}s, mismatched: {failed or 'none'}")


def test_2_parallel_links_against_water_filling(report):
    rng = random.Random(2)
    start = time.perf_counter()
    worst, rejected = 0.0, 0
    for seed in range(100):
        m, k = rng.randint(1, 4), rng.randint(1, 3)
        game = gen_parallel_links(seed, m, k)
        x = solve_at(game, 1)
        rejected += not verify_equilibrium(game, x, 1, 0).passed
        want = oracle_equilibrium(game, 1)
        worst = max(worst, max(abs(float(a) - b) for a, b in zip(x, want)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and rejected == 0 and elapsed < 60
    report(2, ok, f"max deviation {worst:.2e}, exact verify failures {rejected}, {elapsed:.1f}s")


def test_3_player_independent_against_potential(report):
    rng = random.Random(3)
    worst, bad_sigma, decreasing = 0.0, 0, 0
    for seed in range(100):
        n = rng.randint(2, 6)
        m = rng.randint(max(n - 1, 1), 10)
        k = rng.randint(1, 3)
        game = random_game(seed, n=n, m=m, k=k, shared=True)
        f = solve_player_independent(game)
        bad_sigma += any(entry.sigma != 1 for entry in f.path)
        decreasing += any(b.lam_min < a.lam_max for a, b in zip(f.path, f.path[1:]))
        x = evaluate(f, 1)
        want = potential_minimizer(game, 1)
        worst = max(worst, max(abs(float(a) - b) for a, b in zip(x, want)))
    ok = worst <= 1e-8 and bad_sigma == 0 and decreasing == 0
    report(3, ok, f"max deviation {worst:.2e}, sigma != +1 in {bad_sigma}, lambda decreases in {decreasing}")


def test_4_rank_one_updates(report):
    stats = {"pivots": 0, "matrix": 0, "sign": 0}

    def check(state, pair, update):
        if isinstance(update, DegenerateNeighbor):
            return
        stats["pivots"] += 1
        fresh = build_block_laplacian(state.game, update.support)
        if update.matrix != fresh.matrix or update.inverse != fresh.inverse or update.sign != fresh.sign:
            stats["matrix"] += 1
        lap = state.laplacian
        lhs = sgn(w_dot_direction(lap, *pair))
        rhs = -lap.sign * fresh.sign * sgn(w_dot_direction(fresh, *pair))
        stats["sign"] += lhs != rhs

    seed = 0
    while stats["pivots"] < 200:
        trace(random_game(seed, n=5, m=8, k=3), on_update=check)
        seed += 1
    ok = stats["matrix"] == 0 and stats["sign"] == 0
    report(4, ok, f"{stats['pivots']} pivots over {seed} games, update mismatches {stats['matrix']}, "
                  f"sign relation failures {stats['sign']}")


def _perturbed_examples(count):
    base = gen_example_8player()
    yield base
    for seed in range(count):
        rng = random.Random(seed)
        slope = tuple(a + mpq(rng.randint(-10, 10), 100) for a in base.slope)
        offset = tuple(b + (mpq(rng.randint(-10, 10), 100) if b < 100 else 0) for b in base.offset)
        yield Game(base.n, base.edges, base.commodities, slope, offset)


def test_5_involution(report):
    games = list(_perturbed_examples(12)) + [random_game(s, n=4, m=7, k=k) for s in range(20) for k in (2, 3)]
    checks = fails = 0
    for game in games:
        f = trace(game)
        for entry in f.path:
            state = make_state(build_block_laplacian(f.game, entry.support))
            forward = succ(state)
            if not isinstance(forward, Terminal):
                back = pred(forward.state)
                checks += 1
                fails += isinstance(back, Terminal) or back.state.support != entry.support
            backward = pred(state)
            if not isinstance(backward, Terminal):
                again = succ(backward.state)
                checks += 1
                fails += isinstance(again, Terminal) or again.state.support != entry.support
    report(5, fails == 0 and checks > 0, f"{checks} succ/pred round trips on {len(games)} games, {fails} failures")


def test_6_equilibrium_soundness(report):
    rng = random.Random(6)
    failures = total = 0
    for seed in range(20):
        f = trace(random_game(seed, n=5, m=8, k=3))
        for _ in range(50):
            lam = mpq(rng.randint(0, 10**6), 10**6)
            failures += not verify_equilibrium(f.game, evaluate(f, lam), lam, 0).passed
            total += 1
    report(6, failures == 0, f"{total} evaluations, {failures} rejected at tolerance 0")


def test_7_odd_equilibrium_count(report):
    counts, resampled, seed = [], 0, 0
    while len(counts) < 50:
        game = gen_complete(seed, 3, 2, CoefficientRanges(depth=4))
        seed += 1
        scan = exhaustive_support_scan(game, 1)
        if scan.degenerate:
            resampled += 1
            continue
        counts.append(len(scan.equilibria))
    even = [c for c in counts if c % 2 == 0]
    report(7, not even, f"50 instances (mk=12), counts {sorted(set(counts))}, even {len(even)}, "
                        f"degenerate draws resampled {resampled}")


GADGETS = {
    "matching pennies": ([[1, 0], [0, 1]], [[0, 1], [1, 0]]),
    "coordination": ([[1, 0], [0, 1]], [[1, 0], [0, 1]]),
    "dominant strategies": ([[1, 1], [0, 0]], [[1, 0], [1, 0]]),
}


@pytest.mark.slow
def test_8_gadget_round_trip(report):
    results = []
    for name, (U, V) in GADGETS.items():
        bm = make_bimatrix(U, V, 1, mpq(1, 10**6))
        game, layout = gen_gadget(bm)
        x = solve_at(game, 1)
        profile = extract_bimatrix_strategies(layout, x)
        wrong_aux = max(x[e] for e in layout.aux2)
        ok = (
            profile.epsilon <= mpq(1, 2) + mpq(1, 1000)
            and sum(profile.y) == 1 and sum(profile.z) == 1
            and wrong_aux <= bm.delta
        )
        results.append((name, ok, float(profile.epsilon)))
    detail = ", ".join(f"{name} eps={eps:.3g}" for name, _, eps in results)
    report(8, all(ok for _, ok, _ in results), detail + " (bound 0.501)")


def _median_pivot_time(rows, cols, seeds):
    times = []
    for seed in seeds:
        game = gen_grid(seed, rows, cols, 2)
        stamps = []
        trace(game, on_step=lambda state, step: stamps.append(time.perf_counter()))
        times += [b - a for a, b in zip(stamps, stamps[1:])]
    return statistics.median(times)


def test_9_pivot_time_scaling(report):
    _median_pivot_time(2, 2, range(2))  # warm up
    small = _median_pivot_time(4, 4, range(10))
    large = _median_pivot_time(4, 8, range(10))
    ratio = large / small
    report(9, ratio <= 5, f"median per-pivot {small * 1e3:.2f}ms at n=16, {large * 1e3:.2f}ms at n=32, "
                          f"ratio {ratio:.2f}")
