"""Exception types shared across the library."""
from __future__ import annotations


class SpecrcvError(Exception):
    """Base class for all errors raised by this package."""


class NonFiniteError(SpecrcvError):
    """An input or result contains NaN or infinity."""


class NotPSDError(SpecrcvError):
    """A matrix required to be positive semidefinite is not, beyond tolerance."""


class OutOfDomainError(SpecrcvError):
    """A time argument falls outside the unit interval."""


class BadSpecError(SpecrcvError):
    """A simulation spec is structurally invalid (shape, sign, bound)."""


class BadGridError(SpecrcvError):
    """An observation or probe grid violates its constraints."""


class BadProfileError(SpecrcvError):
    """A weight or time-change profile violates its constraints."""


class ZeroTraceError(SpecrcvError):
    """Normalization requested for a matrix with nonpositive trace."""


class BadConfigError(SpecrcvError):
    """An experiment configuration failed validation."""


class ZeroIncrementError(SpecrcvError):
    """An increment row has zero length where a positive norm is required."""

    def __init__(self, row: int, message: str | None = None):
        self.row = row
        super().__init__(message or f"zero-length increment at row {row}")


class NoConvergenceError(SpecrcvError):
    """A fixed-point or descent iteration failed to reach its tolerance."""

    def __init__(self, iterations: int, residual: float, message: str | None = None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            message
            or f"no convergence after {iterations} iterations (residual {residual:.3e})"
        )
