"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class IsaacsError(Exception):
    """Base class for all errors raised by ``isaacs_fd``."""


class InvalidStep(IsaacsError, ValueError):
    pass


class EmptyGrid(IsaacsError):
    pass


class OutOfGrid(IsaacsError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return Exception.__str__(self)


class ValidationFailed(IsaacsError):
    """A sampled coefficient violated the structural assumptions.

    ``check`` names the failing check, ``sample`` is the worst violating
    ``(alpha, beta, t, x)`` tuple and ``value`` the offending quantity.
    """

    def __init__(self, check: str, sample, value: float, report=None):
        self.check = check
        self.sample = sample
        self.value = value
        self.report = report
        super().__init__(f"check {check!r} failed at {sample}: value {value!r}")


class UnknownKind(IsaacsError, ValueError):
    pass


class UnsupportedDimension(IsaacsError, ValueError):
    pass


class DecompositionInfeasible(IsaacsError):
    """Strict diagonal dominance failed for some row of a diffusion matrix."""

    def __init__(self, row: int, margin: float, point: int | None = None):
        self.row = row
        self.margin = margin
        self.point = point
        where = "" if point is None else f" (point {point})"
        super().__init__(
            f"row {row}{where}: a_ii - sum_j |a_ij| = {margin!r} is below the positivity floor"
        )


class NonMonotone(IsaacsError):
    pass


class NoConvergence(IsaacsError):
    def __init__(self, t: float, residual: float, iterations: int):
        self.t = t
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"slice t={t!r} did not converge in {iterations} iterations (increment {residual!r})"
        )


class DegenerateData(IsaacsError, ValueError):
    pass


class EmptyRegion(IsaacsError):
    pass


class MonotonicityViolation(IsaacsError):
    pass


class BarrierSearchFailed(IsaacsError):
    pass


class ConfigParseError(IsaacsError, ValueError):
    pass
