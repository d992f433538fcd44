"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations

from dataclasses import dataclass


class SpiderChainError(Exception):
    """Base class for all errors raised by spiderchain."""


@dataclass(frozen=True)
class Violation:
    """One failed constraint found while validating a chain."""

    kind: str
    where: str
    detail: str

    def as_dict(self) -> dict:
        return {"kind": self.kind, "where": self.where, "detail": self.detail}


class ValidationError(SpiderChainError):
    def __init__(self, violations):
        self.violations = list(violations)
        kinds = ", ".join(sorted({v.kind for v in self.violations}))
        super().__init__(f"{len(self.violations)} violated constraint(s): {kinds}")


class SizeOverflow(SpiderChainError):
    pass


class QuadratureUnconverged(SpiderChainError):
    pass


class UnsupportedWeight(SpiderChainError):
    pass


class PoleTooClose(SpiderChainError):
    pass


class SingularAssembly(SpiderChainError):
    pass


class HypothesisViolated(SpiderChainError):
    """The convergents left the band 0 < A_n < B_n."""

    def __init__(self, leg, depth, numerator, denominator):
        self.leg = leg
        self.depth = depth
        super().__init__(
            f"leg {leg}: 0 < A_n < B_n fails at n={depth} "
            f"(A={numerator!r}, B={denominator!r})"
        )


class DepthExceeded(SpiderChainError):
    pass


class NotStochastic(SpiderChainError):
    """A factor entry left [0, 1]; witnesses that some beta is below its threshold."""

    def __init__(self, depth, leg, entry, value):
        self.depth = depth
        self.leg = leg
        self.entry = entry
        self.value = value
        super().__init__(f"{entry}_{{{depth},{leg}}} = {value!r} is outside [0, 1]")

    def as_dict(self) -> dict:
        return {
            "error": "NotStochastic",
            "depth": self.depth,
            "leg": self.leg,
            "entry": self.entry,
            "value": self.value,
        }


class DegenerateDivision(SpiderChainError):
    def __init__(self, depth, leg, entry):
        self.depth = depth
        self.leg = leg
        self.entry = entry
        super().__init__(f"vanishing denominator while solving {entry}_{{{depth},{leg}}}")


class SingularGeronimus(SpiderChainError):
    pass


class ZeroInSupport(SpiderChainError):
    pass


class NegativeAtomMass(SpiderChainError):
    pass


class OutOfSupport(SpiderChainError):
    pass


class DegenerateDirection(SpiderChainError):
    pass


class IndexMismatch(SpiderChainError):
    pass


class InvalidBeta(SpiderChainError):
    pass


class TruncationNotExact(UserWarning):
    """Truncation level is below the bound that makes a matrix power exact."""
