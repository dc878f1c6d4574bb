import pytest
from gmpy2 import mpq

from conftest import direct_flow, long_path_flow
from spliteq.game import (
    aggregate_flow,
    excess,
    make_game,
    marginal_cost,
    player_cost,
    strongly_connect,
    verify_equilibrium,
)


def single_edge(a=1, b=0, rate=1):
    return make_game(2, [(0, 1)], [(0, 1, rate)], [a], [b])


def test_aggregate_on_detour_flow(example):
    x = long_path_flow(example)
    totals = aggregate_flow(x, example.m)
    # Three players use forward ring edge e0 on their detours.
    assert totals[0] == 6


def test_aggregate_zero_and_single_player():
    assert aggregate_flow([mpq(0)] * 6, 3) == [0, 0, 0]
    assert aggregate_flow([mpq(1), mpq(2)], 2) == [1, 2]


def test_aggregate_rejects_bad_length():
    with pytest.raises(ValueError):
        aggregate_flow([mpq(1)] * 5, 2)


def test_marginal_cost_values():
    game = make_game(2, [(0, 1)], [(0, 1, 1)], [9], [3])
    assert marginal_cost(game, [mpq(1)], 0, 0) == 21
    shared = make_game(2, [(0, 1)], [(0, 1, 1)] * 3, [1] * 3, [6] * 3)
    assert marginal_cost(shared, [mpq(2), mpq(2), mpq(2)], 0, 0) == 14
    assert marginal_cost(single_edge(5, 7), [mpq(0)], 0, 0) == 7


def test_player_cost_values(example):
    x = direct_flow(example)
    assert player_cost(example, x, 0) == 12
    assert player_cost(example, [mpq(0)] * (example.m * example.k), 0) == 0
    assert player_cost(single_edge(2, 5, 3), [mpq(3)], 0) == 33


def test_excess_out_minus_in(example):
    y = excess(example, long_path_flow(example))
    assert y[:4] == [2, 0, 0, -2]
    assert excess(single_edge(), [mpq(3)]) == [3, -3]
    assert all(v == 0 for v in excess(example, [mpq(0)] * (example.m * example.k)))


def test_verify_detour_flow_passes(example):
    report = verify_equilibrium(example, long_path_flow(example), 1, 0)
    assert report.passed and report.max_violation == 0


def test_verify_zero_flow_at_zero_demand(example):
    assert verify_equilibrium(example, [mpq(0)] * (example.m * example.k), 0).passed


def test_verify_wrong_scale_reports_conservation(example):
    report = verify_equilibrium(example, direct_flow(example), 1, 0)
    assert not report.passed
    assert len(report.conservation) == 2 * example.k
    assert all(gap == 1 for _, _, gap in report.conservation)


def test_verify_rejects_shift_to_costlier_path(example):
    x = long_path_flow(example)
    # Move a little of player 1's flow from the detour onto its direct edge.
    for e in (0, 2, 4):
        x[e] -= mpq(1, 10)
    x[7] += mpq(1, 10)
    report = verify_equilibrium(example, x, 1, 0)
    assert not report.passed and report.potential


def test_verify_negative_flow():
    report = verify_equilibrium(single_edge(), [mpq(-1)], 0, 0)
    assert not report.passed and report.negativity


def test_strongly_connect_noop_and_reverse_edge():
    ring = make_game(2, [(0, 1), (1, 0)], [(0, 1, 1)], [1, 1], [0, 0])
    assert strongly_connect(ring, 100) == ring
    aug = strongly_connect(single_edge(), 100)
    assert aug.m == 2 and aug.edges[1] == (1, 0)
    assert aug.a(1, 0) == 1 and aug.b(1, 0) == 100
    assert aug.edges[:1] == ((0, 1),)


def test_game_validation():
    with pytest.raises(ValueError):
        make_game(2, [(0, 1)], [(0, 1, 1)], [0], [0])
    with pytest.raises(ValueError):
        make_game(2, [(0, 0)], [(0, 1, 1)], [1], [0])
    with pytest.raises(ValueError):
        make_game(2, [(0, 1)], [(0, 1, 1)], [1], [-1])


def _scc_labels(n, edges):
    import numpy as np
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    rows = np.array([t for t, _ in edges])
    cols = np.array([h for _, h in edges])
    graph = coo_matrix((np.ones(len(edges)), (rows, cols)), shape=(n, n))
    return connected_components(graph, directed=True, connection="strong")


def test_strongly_connect_gadget_against_scc():
    from spliteq.generators import gen_gadget, make_bimatrix

    game, _ = gen_gadget(make_bimatrix([[1]], [[1]]))
    count, labels = _scc_labels(game.n, game.edges)
    into = {labels[h] for t, h in game.edges if labels[t] != labels[h]}
    out_of = {labels[t] for t, h in game.edges if labels[t] != labels[h]}
    sources = count - len(into)
    sinks = count - len(out_of)
    aug = strongly_connect(game, 1000)
    assert aug.edges[: game.m] == game.edges
    assert aug.m - game.m == sinks + sources - 1
    assert _scc_labels(aug.n, aug.edges)[0] == 1
