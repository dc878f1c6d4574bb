"""Exact rational helpers built on gmpy2's ``mpq``."""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable

from gmpy2 import mpq

ZERO = mpq(0)
ONE = mpq(1)


def q(value: object) -> mpq:
    """Convert ints, Fractions, mpq values and "p/q" or decimal strings exactly."""
    if isinstance(value, str):
        text = value.strip()
        if not text:
            raise ValueError("empty number")
        return mpq(text)
    if isinstance(value, Fraction):
        return mpq(value.numerator, value.denominator)
    if isinstance(value, float):
        # Shortest decimal repr, so 0.1 means one tenth and not its binary neighbour.
        return mpq(repr(value))
    return mpq(value)


def qvec(values: Iterable[object]) -> list[mpq]:
    return [q(v) for v in values]


def to_fraction(value: mpq) -> Fraction:
    return Fraction(int(value.numerator), int(value.denominator))


def sign(value: mpq) -> int:
    return (value > 0) - (value < 0)


def render(value: mpq) -> str:
    """Canonical text form: "p/q", or a bare integer when the denominator is 1."""
    value = mpq(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"
