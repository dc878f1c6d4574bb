"""Versioned text format for games, and breakpoint emission.

A document is line oriented; ``#`` starts a comment.  Canonical layout::

    splitgame 1
    big 1000000
    delta 1/1000000
    vertex s
    vertex t
    edge s t
    commodity s t 2
    cost 0 0 1 0
    meta seed 7
    bimatrix U 1,0;0,1

``cost`` rows are ``edge player slope offset`` with 0-based indices and must
cover every (edge, player) pair once.  Numbers are integers, fractions
``p/q`` or finite decimals and are kept exact.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Sequence

from gmpy2 import mpq

from .errors import ParseError
from .game import Commodity, Game
from .generators import BimatrixGame
from .homotopy import PiecewiseAffineEquilibrium, restrict_flow
from .rational import render

FORMAT = "splitgame"
VERSION = 1
DEFAULT_BIG = mpq(10**6)
DEFAULT_DELTA = mpq(1, 10**6)

_NUMBER = re.compile(r"[+-]?(\d+(/\d+)?|\d*\.\d+|\d+\.\d*)")
_NAME = re.compile(r"[A-Za-z0-9_.:\-\[\]]+")


@dataclass
class Metadata:
    names: list[str] = field(default_factory=list)
    big: mpq = DEFAULT_BIG
    delta: mpq = DEFAULT_DELTA
    entries: list[tuple[str, str]] = field(default_factory=list)
    bimatrix: BimatrixGame | None = None

    def get(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.entries:
            if k == key:
                return v
        return default


def parse_number(text: str, line: int = 0, column: int = 0) -> mpq:
    if not _NUMBER.fullmatch(text):
        raise ParseError(f"not a number: {text!r}", line, column)
    if "/" in text:
        if int(text.split("/")[1]) == 0:
            raise ParseError("zero denominator", line, column)
    return mpq(text) if "." not in text else _decimal(text)


def _decimal(text: str) -> mpq:
    sign = -1 if text.startswith("-") else 1
    body = text.lstrip("+-")
    whole, frac = body.split(".")
    digits = int((whole or "0") + frac) if (whole or frac) else 0
    return sign * mpq(digits, 10 ** len(frac))


def _matrix(text: str, line: int, column: int) -> tuple[tuple[int, ...], ...]:
    try:
        rows = tuple(tuple(int(v) for v in row.split(",")) for row in text.split(";"))
    except ValueError:
        raise ParseError(f"bad matrix {text!r}", line, column) from None
    return rows


def _render_matrix(mat: Sequence[Sequence[int]]) -> str:
    return ";".join(",".join(str(v) for v in row) for row in mat)


class _Reader:
    def __init__(self, text: str) -> None:
        self.lines = text.splitlines()

    def tokens(self):
        for number, raw in enumerate(self.lines, 1):
            body = raw.split("#", 1)[0]
            toks = [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", body)]
            if toks:
                yield number, toks


def parse(text: str) -> tuple[Game, Metadata]:
    """Read a document; every error carries the line and column where it was detected."""
    reader = _Reader(text)
    meta = Metadata()
    edges: list[tuple[int, int]] = []
    commodities: list[Commodity] = []
    costs: dict[tuple[int, int], tuple[mpq, mpq]] = {}
    index: dict[str, int] = {}
    bim: dict[str, object] = {}
    header = False
    seen_single: set[str] = set()
    last_line = 0

    def arity(toks, want: int, line: int) -> None:
        if len(toks) != want:
            col = toks[want][1] if len(toks) > want else toks[-1][1] + len(toks[-1][0])
            raise ParseError(f"{toks[0][0]} takes {want - 1} fields, got {len(toks) - 1}", line, col)

    def vertex(tok: tuple[str, int], line: int) -> int:
        if tok[0] not in index:
            raise ParseError(f"unknown vertex {tok[0]!r}", line, tok[1])
        return index[tok[0]]

    def integer(tok: tuple[str, int], line: int, bound: int, what: str) -> int:
        if not tok[0].isdigit() or int(tok[0]) >= bound:
            raise ParseError(f"bad {what} index {tok[0]!r}", line, tok[1])
        return int(tok[0])

    for line, toks in reader.tokens():
        last_line = line
        word, col = toks[0]
        if not header:
            if word != FORMAT:
                raise ParseError(f"document must start with '{FORMAT} <version>'", line, col)
            arity(toks, 2, line)
            if toks[1][0] != str(VERSION):
                raise ParseError(f"unsupported version {toks[1][0]}", line, toks[1][1])
            header = True
            continue
        if word in ("big", "delta"):
            arity(toks, 2, line)
            if word in seen_single:
                raise ParseError(f"duplicate {word}", line, col)
            seen_single.add(word)
            value = parse_number(toks[1][0], line, toks[1][1])
            if value <= 0:
                raise ParseError(f"{word} must be positive", line, toks[1][1])
            setattr(meta, word, value)
        elif word == "vertex":
            arity(toks, 2, line)
            name, ncol = toks[1]
            if not _NAME.fullmatch(name):
                raise ParseError(f"bad vertex name {name!r}", line, ncol)
            if name in index:
                raise ParseError(f"duplicate vertex {name!r}", line, ncol)
            index[name] = len(meta.names)
            meta.names.append(name)
        elif word == "edge":
            arity(toks, 3, line)
            tail, head = vertex(toks[1], line), vertex(toks[2], line)
            if tail == head:
                raise ParseError("self-loop", line, toks[2][1])
            edges.append((tail, head))
        elif word == "commodity":
            arity(toks, 4, line)
            s, t = vertex(toks[1], line), vertex(toks[2], line)
            if s == t:
                raise ParseError("source equals sink", line, toks[2][1])
            rate = parse_number(toks[3][0], line, toks[3][1])
            if rate < 0:
                raise ParseError("negative rate", line, toks[3][1])
            commodities.append(Commodity(s, t, rate))
        elif word == "cost":
            arity(toks, 5, line)
            e = integer(toks[1], line, len(edges), "edge")
            i = integer(toks[2], line, len(commodities), "player")
            if (e, i) in costs:
                raise ParseError(f"duplicate cost for edge {e}, player {i}", line, col)
            a = parse_number(toks[3][0], line, toks[3][1])
            b = parse_number(toks[4][0], line, toks[4][1])
            if a <= 0:
                raise ParseError("slope must be positive", line, toks[3][1])
            if b < 0:
                raise ParseError("offset must be nonnegative", line, toks[4][1])
            costs[e, i] = (a, b)
        elif word == "meta":
            if len(toks) < 3:
                raise ParseError("meta needs a key and a value", line, col)
            meta.entries.append((toks[1][0], " ".join(t for t, _ in toks[2:])))
        elif word == "bimatrix":
            arity(toks, 3, line)
            key, value = toks[1][0], toks[2]
            if key in ("U", "V"):
                bim[key] = _matrix(value[0], line, value[1])
            elif key in ("beta", "delta"):
                bim[key] = parse_number(value[0], line, value[1])
            else:
                raise ParseError(f"unknown bimatrix field {key!r}", line, toks[1][1])
        else:
            raise ParseError(f"unknown field {word!r}", line, col)
    end = last_line + 1
    if not header:
        raise ParseError("empty document", end, 1)
    if not commodities:
        raise ParseError("no commodities", end, 1)
    if len(meta.names) < 2 or not edges:
        raise ParseError("need at least two vertices and one edge", end, 1)
    m, k = len(edges), len(commodities)
    missing = [(e, i) for i in range(k) for e in range(m) if (e, i) not in costs]
    if missing:
        e, i = missing[0]
        raise ParseError(f"no cost row for edge {e}, player {i}", end, 1)
    if bim:
        if "U" not in bim or "V" not in bim:
            raise ParseError("bimatrix payload needs both U and V", end, 1)
        try:
            meta.bimatrix = BimatrixGame(
                bim["U"], bim["V"], bim.get("beta", mpq(1)), bim.get("delta", meta.delta)
            )
        except ValueError as exc:
            raise ParseError(str(exc), end, 1) from None
    slope = tuple(costs[e, i][0] for i in range(k) for e in range(m))
    offset = tuple(costs[e, i][1] for i in range(k) for e in range(m))
    game = Game(len(meta.names), tuple(edges), tuple(commodities), slope, offset)
    return game, meta


def serialize(game: Game, meta: Metadata | None = None) -> str:
    """Canonical text; ``parse`` followed by ``serialize`` reproduces it exactly."""
    meta = meta or Metadata()
    names = meta.names or [f"v{v}" for v in range(game.n)]
    if len(names) != game.n:
        raise ValueError(f"{len(names)} names for {game.n} vertices")
    out = [f"{FORMAT} {VERSION}", f"big {render(meta.big)}", f"delta {render(meta.delta)}"]
    out += [f"vertex {name}" for name in names]
    out += [f"edge {names[t]} {names[h]}" for t, h in game.edges]
    out += [f"commodity {names[c.source]} {names[c.sink]} {render(c.rate)}" for c in game.commodities]
    for i in range(game.k):
        for e in range(game.m):
            out.append(f"cost {e} {i} {render(game.a(e, i))} {render(game.b(e, i))}")
    out += [f"meta {k} {v}" for k, v in meta.entries]
    if meta.bimatrix is not None:
        bm = meta.bimatrix
        out += [
            f"bimatrix U {_render_matrix(bm.U)}",
            f"bimatrix V {_render_matrix(bm.V)}",
            f"bimatrix beta {render(bm.beta)}",
            f"bimatrix delta {render(bm.delta)}",
        ]
    return "\n".join(out) + "\n"


def canonical(text: str) -> str:
    return serialize(*parse(text))


def format_number(value: mpq, decimals: int | None = None) -> str:
    if decimals is None:
        return render(value)
    return f"{float(value):.{decimals}f}"


def breakpoint_table(f: PiecewiseAffineEquilibrium) -> tuple[list[str], list[tuple]]:
    """Header and rows (lambda, flows, potentials, support) over the original edges."""
    game = f.game
    m, n, k = f.original_edges, game.n, game.k
    header = ["lambda"]
    header += [f"x_e{e}_p{i}" for i in range(k) for e in range(m)]
    header += [f"pi_v{v}_p{i}" for i in range(k) for v in range(n)]
    header.append("support")
    rows = []
    for j, bp in enumerate(f.breakpoints):
        support = f.supports[max(j - 1, 0)] if f.supports else None
        flow = restrict_flow(f, bp.flow)
        tag = support.fingerprint() if support is not None else ""
        rows.append((bp.lam, flow, list(bp.potential), tag))
    return header, rows


def emit_breakpoints(f: PiecewiseAffineEquilibrium, fmt: str = "csv", decimals: int | None = None) -> str:
    """One row per breakpoint; a plateau shows up as two rows with the same lambda."""
    header, rows = breakpoint_table(f)
    if fmt == "csv":
        lines = [",".join(header)]
        for lam, flow, pi, tag in rows:
            cells = [format_number(lam, decimals)]
            cells += [format_number(v, decimals) for v in flow]
            cells += [format_number(v, decimals) for v in pi]
            cells.append(tag)
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"
    if fmt == "jsonlike":
        records = []
        for lam, flow, pi, tag in rows:
            values = [format_number(lam, decimals)] + [format_number(v, decimals) for v in flow + pi] + [tag]
            records.append(dict(zip(header, values)))
        return json.dumps(records, indent=1) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def parse_breakpoints_csv(text: str) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def parse_flow(text: str) -> list[mpq]:
    """Whitespace or comma separated numbers, player-major; ``#`` comments allowed."""
    values = []
    for line, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0]
        for match in re.finditer(r"[^\s,]+", body):
            values.append(parse_number(match.group(), line, match.start() + 1))
    return values


def format_flow(game: Game, x: Sequence, decimals: int | None = None) -> str:
    lines = []
    for i in range(game.k):
        block = x[i * game.m:(i + 1) * game.m]
        lines.append(" ".join(repr(v) if isinstance(v, float) else format_number(v, decimals) for v in block))
    return "\n".join(lines) + "\n"
