import random

import numpy as np
import pytest
from gmpy2 import mpq

from conftest import long_path_flow
from helpers import random_game
from spliteq.errors import UnsupportedCosts
from spliteq.game import make_game, verify_equilibrium
from spliteq.generators import CoefficientRanges, gen_parallel_links
from spliteq.homotopy import evaluate, restrict_flow, solve_at, solve_player_independent, trace
from spliteq.oracle import oracle_equilibrium
from spliteq.support import apply_c, build_support_matrices, tension


def player(game, vec, i, size):
    return list(vec[i * size:(i + 1) * size])


def test_golden_breakpoints(example_trace):
    f = example_trace
    assert f.lambdas == [0, mpq(1, 2), mpq(1, 2), 1]
    pis = [player(f.game, bp.potential, 0, 4) for bp in f.breakpoints]
    assert pis == [[0, 6, 12, 3], [0, 7, 14, 21], [0, 10, 20, 30], [0, 14, 28, 42]]
    flows = [player(f.game, bp.flow, 0, 8) for bp in f.breakpoints]
    assert flows[0] == [0] * 8
    assert flows[1] == [0, 0, 0, 0, 0, 0, 0, 1]
    assert flows[2] == [1, 0, 1, 0, 1, 0, 0, 0]
    assert flows[3] == [2, 0, 2, 0, 2, 0, 0, 0]


def test_solve_at_example(example):
    assert solve_at(example, 1) == long_path_flow(example)
    assert all(v == 0 for v in solve_at(example, 0))
    quarter = solve_at(example, mpq(1, 4))
    assert player(example, quarter, 0, 8) == [0] * 7 + [mpq(1, 2)]
    assert verify_equilibrium(example, quarter, mpq(1, 4), 0).passed


def test_solve_at_rejects_lambda_outside_unit_interval(example):
    with pytest.raises(ValueError):
        solve_at(example, mpq(3, 2))


def test_float_mode_returns_floats(example):
    x = solve_at(example.with_mode("float"), 1)
    assert all(isinstance(v, float) for v in x)
    assert x == [float(v) for v in long_path_flow(example)]


def test_zero_demand_is_one_segment():
    game = make_game(3, [(0, 1), (1, 2), (2, 0)], [(0, 2, 0)], [1, 1, 1], [1, 2, 3])
    f = trace(game)
    assert f.lambdas == [0, 1]
    assert all(v == 0 for bp in f.breakpoints for v in bp.flow)


def test_evaluate_breakpoints_and_midpoints():
    f = trace(random_game(7))
    for bp in f.breakpoints:
        if bp.lam == 0:
            continue
        # The left piece wins at a plateau; its flow is the first breakpoint with this lambda.
        first = next(b for b in f.breakpoints if b.lam == bp.lam)
        assert evaluate(f, bp.lam) == list(first.flow)
    for a, b in zip(f.breakpoints, f.breakpoints[1:]):
        if a.lam == b.lam:
            continue
        mid = evaluate(f, (a.lam + b.lam) / 2)
        assert mid == [(x + y) / 2 for x, y in zip(a.flow, b.flow)]


def test_evaluate_rejects_outside():
    f = trace(random_game(7))
    with pytest.raises(ValueError):
        evaluate(f, -1)


def test_segment_direction_matches_support():
    for seed in range(5):
        f = trace(random_game(seed))
        game = f.game
        for j, (a, b) in enumerate(zip(f.breakpoints, f.breakpoints[1:])):
            if a.lam == b.lam:
                continue
            support = f.supports[j]
            dpi = [(y - x) / (b.lam - a.lam) for x, y in zip(a.potential, b.potential)]
            direction = apply_c(build_support_matrices(game, support), tension(game, dpi), "c")
            for x, y, d in zip(a.flow, b.flow, direction):
                assert y - x == (b.lam - a.lam) * d


def test_emitted_lambdas_never_decrease():
    for seed in range(20):
        f = trace(random_game(seed, k=3))
        lams = f.lambdas
        assert lams[0] == 0 and lams[-1] == 1
        assert all(x <= y for x, y in zip(lams, lams[1:]))
        # Repeated values only come in plateau pairs.
        assert all(lams.count(v) <= 2 for v in lams)


def test_parallel_links_breakpoints_against_water_filling():
    # Between two breakpoints the flow must match the independent oracle.
    for seed in range(10):
        game = gen_parallel_links(seed, 3, 2, CoefficientRanges(depth=2))
        f = trace(game)
        for a, b in zip(f.breakpoints, f.breakpoints[1:]):
            if a.lam == b.lam:
                continue
            lam = (a.lam + b.lam) / 2
            got = [float(v) for v in restrict_flow(f, evaluate(f, lam))]
            want = oracle_equilibrium(game, lam)
            assert np.allclose(got, want, atol=1e-8)


def test_player_independent_equals_trace():
    game = random_game(2, shared=True, k=3)
    a, b = trace(game), solve_player_independent(game)
    assert a.breakpoints == b.breakpoints
    assert all(entry.sigma == 1 for entry in b.path)


def test_player_independent_rejects_specific_costs(example):
    with pytest.raises(UnsupportedCosts):
        solve_player_independent(example)


def test_braess_single_player_against_kkt():
    # s=0, a=1, b=2, t=3; one player, so the equilibrium is the system optimum.
    edges = [(0, 1), (1, 3), (0, 2), (2, 3), (1, 2)]
    slope = [1, 1, 1, 1, 1]
    offset = [0, 2, 2, 0, 0]
    game = make_game(4, edges, [(0, 3, 2)], slope, offset)
    x = solve_at(game, 1)
    # All edges used: 2 a x_e + b_e = pi_head - pi_tail and conservation, pi_s = 0.
    rows, rhs = [], []
    for e, (t, h) in enumerate(edges):
        row = [0.0] * 8
        row[e] = 2.0 * slope[e]
        if h:
            row[5 + h - 1] -= 1
        if t:
            row[5 + t - 1] += 1
        rows.append(row)
        rhs.append(-offset[e])
    for v, need in ((1, 0), (2, 0), (3, -2)):
        row = [0.0] * 8
        for e, (t, h) in enumerate(edges):
            row[e] += (t == v) - (h == v)
        rows.append(row)
        rhs.append(need)
    sol = np.linalg.solve(np.array(rows), np.array(rhs))
    assert (sol[:5] > 0).all()
    assert np.allclose([float(v) for v in x], sol[:5], atol=1e-12)
    assert verify_equilibrium(game, x, 1, 0).passed


def test_budget_exceeded(example):
    from spliteq.errors import PivotBudgetExceeded

    with pytest.raises(PivotBudgetExceeded):
        trace(example, budget=3)


def test_random_lambda_soundness_small():
    rng = random.Random(1)
    f = trace(random_game(11, k=3))
    for _ in range(10):
        lam = mpq(rng.randint(0, 1000), 1000)
        assert verify_equilibrium(f.game, evaluate(f, lam), lam, 0).passed
