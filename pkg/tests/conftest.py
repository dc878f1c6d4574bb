import pytest
from gmpy2 import mpq

from spliteq.generators import gen_example_8player
from spliteq.homotopy import trace


@pytest.fixture(scope="session")
def example():
    return gen_example_8player()


@pytest.fixture(scope="session")
def example_trace(example):
    return trace(example)


def long_path_flow(game, amount=mpq(2)):
    """Every player of the 8-player example routes ``amount`` on its three-edge detour."""
    from spliteq.generators import EXAMPLE8_PLAYERS

    x = [mpq(0)] * (game.m * game.k)
    for i, (_, _, _, detour) in enumerate(EXAMPLE8_PLAYERS):
        for e in detour:
            x[i * game.m + e] = amount
    return x


def direct_flow(game, amount=mpq(1)):
    from spliteq.generators import EXAMPLE8_PLAYERS

    x = [mpq(0)] * (game.m * game.k)
    for i, (_, _, direct, _) in enumerate(EXAMPLE8_PLAYERS):
        x[i * game.m + direct] = amount
    return x
