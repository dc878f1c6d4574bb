from fractions import Fraction

import numpy as np
import pytest
from gmpy2 import mpq

from conftest import long_path_flow
from helpers import random_game
from spliteq.errors import BudgetExceeded, UnsupportedCosts
from spliteq.game import make_game, verify_equilibrium
from spliteq.generators import CoefficientRanges, gen_complete, gen_parallel_links
from spliteq.homotopy import solve_at
from spliteq.oracle import (
    OracleConfig,
    best_response,
    exhaustive_support_scan,
    oracle_equilibrium,
    potential_minimizer,
    water_fill,
)


def test_best_response_two_links():
    game = make_game(2, [(0, 1), (0, 1)], [(0, 1, 2)], [1, 1], [0, 2])
    assert best_response(game, [0, 0], 0) == [Fraction(3, 2), Fraction(1, 2)]


def test_best_response_single_edge():
    game = make_game(2, [(0, 1)], [(0, 1, 3)], [2], [1])
    assert best_response(game, [0], 0) == [3]


def test_best_response_fixed_point_on_example(example):
    x = [float(v) for v in long_path_flow(example)]
    resp = best_response(example, x, 0)
    assert np.allclose(resp, x[: example.m], atol=1e-8)


def test_water_fill_closed_form():
    # Two links with marginal 2x and 2x+2 share demand 2 at level 3.
    assert water_fill([Fraction(0), Fraction(2)], [Fraction(2), Fraction(2)], Fraction(2)) == [
        Fraction(3, 2), Fraction(1, 2)
    ]
    assert water_fill([0, 5], [1, 1], 2) == [2, 0]
    assert water_fill([1, 1], [1, 1], 0) == [0, 0]


def test_oracle_parallel_links_verify():
    for seed in range(20):
        game = gen_parallel_links(seed, 4, 3)
        x = oracle_equilibrium(game, 1)
        assert verify_equilibrium(game, x, 1, mpq(1, 10**9)).passed


def test_oracle_single_player_one_round():
    game = make_game(2, [(0, 1), (0, 1)], [(0, 1, 2)], [1, 1], [0, 2])
    x = oracle_equilibrium(game, 1, OracleConfig(max_iterations=1))
    assert np.allclose(x, [1.5, 0.5])


def test_oracle_example_from_zero(example):
    x = oracle_equilibrium(example, 1)
    assert verify_equilibrium(example, x, 1, mpq(1, 10**9)).passed


def test_oracle_config_validation():
    with pytest.raises(ValueError):
        OracleConfig(max_iterations=0)
    with pytest.raises(ValueError):
        OracleConfig(tolerance=Fraction(0))
    with pytest.raises(ValueError):
        OracleConfig(mode="guess")


def test_potential_minimizer_rejects_specific_costs(example):
    with pytest.raises(UnsupportedCosts):
        potential_minimizer(example, 1)


def test_potential_minimizer_trivial_cases():
    game = make_game(2, [(0, 1)], [(0, 1, 2), (0, 1, 1)], [1, 1], [3, 3])
    assert np.allclose(potential_minimizer(game, 1), [2, 1])
    assert np.allclose(potential_minimizer(game, 0), [0, 0])


def test_potential_minimizer_matches_solver():
    for seed in range(10):
        game = random_game(seed, n=4, m=6, k=2, shared=True)
        want = potential_minimizer(game, 1)
        got = [float(v) for v in solve_at(game, 1)]
        assert np.allclose(got, want, atol=1e-8)


def test_scan_single_edge():
    game = make_game(2, [(0, 1)], [(0, 1, 1)], [1], [0])
    scan = exhaustive_support_scan(game, 1)
    assert scan.equilibria == [(Fraction(1),)] and not scan.degenerate


def test_scan_budget(example):
    with pytest.raises(BudgetExceeded):
        exhaustive_support_scan(example, mpq(1, 2))


def test_scan_odd_on_small_games():
    # Two players on three parallel links.
    seen = 0
    for seed in range(20):
        game = gen_parallel_links(seed, 3, 2, CoefficientRanges(depth=2))
        scan = exhaustive_support_scan(game, 1)
        if scan.degenerate:
            continue
        assert len(scan.equilibria) % 2 == 1
        seen += 1
    assert seen >= 10


def test_scan_contains_solver_flow():
    for seed in range(5):
        game = gen_complete(seed, 3, 2)
        scan = exhaustive_support_scan(game, 1)
        flow = tuple(Fraction(int(v.numerator), int(v.denominator)) for v in solve_at(game, 1))
        assert flow in scan.equilibria
        for x in scan.equilibria:
            assert verify_equilibrium(game, x, 1, 0).passed
