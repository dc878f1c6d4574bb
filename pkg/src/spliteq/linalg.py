"""Exact dense elimination over rationals."""

from __future__ import annotations

from dataclasses import dataclass

from gmpy2 import mpq

from .rational import ONE, ZERO


@dataclass
class Elimination:
    rank: int
    sign: int
    inverse: list[list[mpq]] | None


def gauss_jordan(matrix: list[list[mpq]]) -> Elimination:
    """Rank, determinant sign and (when nonsingular) inverse of a square matrix.

    The sign is read off the pivot product and the row-swap parity, so it is
    exact; a singular matrix reports sign 0 and no inverse.
    """
    size = len(matrix)
    width = 2 * size
    rows = [list(row) + [ONE if j == i else ZERO for j in range(size)] for i, row in enumerate(matrix)]
    sign = 1
    rank = 0
    for col in range(size):
        pivot = next((r for r in range(rank, size) if rows[r][col]), None)
        if pivot is None:
            continue
        if pivot != rank:
            rows[rank], rows[pivot] = rows[pivot], rows[rank]
            sign = -sign
        head = rows[rank][col]
        if head < 0:
            sign = -sign
        scale = ONE / head
        prow = [v * scale if v else ZERO for v in rows[rank]]
        rows[rank] = prow
        nonzero = [j for j in range(col, width) if prow[j]]
        for r in range(size):
            if r == rank:
                continue
            row = rows[r]
            factor = row[col]
            if factor:
                for j in nonzero:
                    row[j] -= factor * prow[j]
        rank += 1
    if rank < size:
        return Elimination(rank, 0, None)
    return Elimination(size, sign, [row[size:] for row in rows])


def matvec(matrix: list[list[mpq]], vector: list[mpq]) -> list[mpq]:
    nz = [(j, v) for j, v in enumerate(vector) if v]
    return [sum((row[j] * v for j, v in nz), ZERO) for row in matrix]


def vecmat(vector: list[mpq], matrix: list[list[mpq]]) -> list[mpq]:
    width = len(matrix[0]) if matrix else 0
    out = [ZERO] * width
    for i, v in enumerate(vector):
        if v:
            row = matrix[i]
            for j in range(width):
                if row[j]:
                    out[j] += v * row[j]
    return out


def dot(u: list[mpq], v: list[mpq]) -> mpq:
    return sum((a * b for a, b in zip(u, v) if a and b), ZERO)
