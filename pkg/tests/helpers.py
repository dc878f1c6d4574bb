"""Shared builders for tests: small random games that the solver accepts."""

from gmpy2 import mpq

from spliteq.game import strongly_connect
from spliteq.generators import CoefficientRanges, gen_random
from spliteq.support import tension


def random_game(seed, n=4, m=6, k=2, shared=False, depth=3):
    return strongly_connect(gen_random(seed, n, m, k, CoefficientRanges(depth=depth), shared), 100)


def w_dot_direction(lap, e, i):
    """w_{S,e,i}^T applied to the tension of the potential direction."""
    game = lap.game
    tens = tension(game, lap.dpi)
    row = lap.mats.w_row(e, i)
    return sum((row[j] * tens[j * game.m + e] for j in range(game.k)), mpq(0))


def sgn(v):
    return (v > 0) - (v < 0)
