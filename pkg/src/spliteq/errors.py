"""Exception types raised by the solver, the oracles and the instance tools."""

from __future__ import annotations


class SplitEqError(Exception):
    """Base class for every error raised by this package."""


class NonTotalSupport(SplitEqError):
    """Some player's active edges do not connect all vertices."""


class DegenerateSupport(SplitEqError):
    """The source-reduced block Laplacian of the support is singular."""


class ClampedBoundary(SplitEqError):
    """The requested side of the lambda range is the clamp at 0 or 1."""


class RankDefectTooLarge(SplitEqError):
    """A degenerate support with a kernel of dimension above one was reached."""


class PivotBudgetExceeded(SplitEqError):
    """The pivot loop ran past its configured maximum."""


class NoConverge(SplitEqError):
    """An iterative oracle did not reach its tolerance."""


class UnsupportedCosts(SplitEqError):
    """The routine needs player-independent costs."""


class BudgetExceeded(SplitEqError):
    """An exhaustive enumeration would be too large."""


class SizeTooLarge(SplitEqError):
    """A generated instance exceeds the configured edge budget."""


class InfeasibleShape(SplitEqError):
    """Generator arguments cannot produce a valid instance."""


class ParseError(SplitEqError):
    """Instance text could not be parsed; carries a 1-based line and column."""

    def __init__(self, message: str, line: int = 0, column: int = 0) -> None:
        self.line = line
        self.column = column
        super().__init__(f"{line}:{column}: {message}" if line else message)


class AssertionViolation(SplitEqError):
    """An invariant that the theory guarantees failed; signals an implementation bug."""
