"""Exception hierarchy shared by every hyperdyn module.

Each error carries a short machine-readable ``code`` so the command-line
front end can map failures onto exit statuses and JSON error records.
"""

from __future__ import annotations

__all__ = [
    "HyperdynError",
    "DomainError",
    "DegenerateError",
    "SmallnessViolation",
    "InnerDivergence",
    "NonContraction",
    "NoIntersection",
    "TooFar",
    "BracketFailure",
    "ToleranceExceeded",
    "NotNearReturn",
    "GapTooSmall",
    "UnsupportedModel",
    "InsufficientDensity",
    "DegenerateOverlap",
    "BudgetExceeded",
    "AlphabetMismatch",
    "CapExceeded",
    "EmptyIntersection",
    "OutsidePartition",
    "ParseError",
    "ValidationError",
]


class HyperdynError(Exception):
    code = "error"


class DomainError(HyperdynError, ValueError):
    code = "domain_error"


class DegenerateError(HyperdynError):
    code = "degenerate_error"


class SmallnessViolation(DomainError):
    code = "smallness_violation"


class InnerDivergence(HyperdynError):
    code = "inner_divergence"


class NonContraction(HyperdynError):
    code = "non_contraction"


class BracketFailure(HyperdynError):
    code = "bracket_failure"


class NoIntersection(BracketFailure):
    code = "no_intersection"


class TooFar(BracketFailure):
    code = "too_far"


class ToleranceExceeded(HyperdynError):
    code = "tolerance_exceeded"


class NotNearReturn(DomainError):
    code = "not_near_return"


class GapTooSmall(DomainError):
    code = "gap_too_small"


class UnsupportedModel(DomainError):
    code = "unsupported_model"


class InsufficientDensity(HyperdynError):
    code = "insufficient_density"


class DegenerateOverlap(HyperdynError):
    code = "degenerate_overlap"

    def __init__(self, message: str, pair: tuple[int, int] | None = None):
        super().__init__(message)
        self.pair = pair


class BudgetExceeded(HyperdynError):
    code = "budget_exceeded"


class AlphabetMismatch(DomainError):
    code = "alphabet_mismatch"


class CapExceeded(HyperdynError):
    code = "cap_exceeded"


class EmptyIntersection(HyperdynError):
    code = "empty_intersection"


class OutsidePartition(HyperdynError):
    code = "outside_partition"


class ParseError(HyperdynError):
    code = "parse_error"

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.key = key


class ValidationError(HyperdynError):
    code = "validation_error"
