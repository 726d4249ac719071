"""Exception hierarchy.

Every error carries an ``exit_code`` that the command-line front end uses
directly: 1 for usage problems, 2 for violated mathematical preconditions
and 3 for I/O or integrity failures.
"""

from __future__ import annotations


class KdVFeedbackError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class UsageError(KdVFeedbackError):
    """Invalid configuration or command-line input."""

    exit_code = 1


class MathError(KdVFeedbackError):
    """A mathematical precondition or postcondition failed."""

    exit_code = 2


class IntegrityError(KdVFeedbackError):
    """File I/O or data integrity failure."""

    exit_code = 3


# spectral basis
class RangeInsufficient(MathError):
    """The enumerated critical-length set does not extend past ``L``."""


class RootCountMismatch(MathError):
    """Fewer characteristic roots were found than requested."""


class CriticalLength(MathError):
    """The interval length belongs to (or is too close to) the critical set."""


class DegenerateMode(MathError):
    """An eigenfunction has a vanishing norm before normalization."""


class GramFailure(MathError):
    """The computed basis is not orthonormal within tolerance."""


# kernel synthesis
class SingularEntry(MathError):
    """A coupling-matrix denominator is numerically zero."""


class IllConditioned(MathError):
    """The coefficient system is too badly conditioned to trust."""


class DivideByZero(MathError):
    """A mode has a vanishing derivative at the left endpoint."""


class RealnessViolation(MathError):
    """The assembled kernel has a non-negligible imaginary part."""


class BoundaryViolation(MathError):
    """The assembled kernel violates its edge conditions."""


class InadmissibleTestFunction(MathError):
    """A weak-form test function violates the edge conditions of the test class."""


# transform and simulation
class GridMismatch(UsageError):
    """Array length does not match the grid."""


class FactorizationStale(MathError):
    """The kernel changed after the transform was factorized."""


class SingularStepMatrix(MathError):
    """The banded time-step matrix could not be factorized."""


class PicardDiverged(MathError):
    """The within-step fixed-point iteration failed to contract.

    Parameters
    ----------
    message : str
        Human readable description.
    time : float, optional
        Simulation time at which the failure occurred.
    """

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class NonconformingInitialData(UsageError):
    """Initial data do not vanish at both endpoints."""


class DegenerateWindow(MathError):
    """Too few usable samples to fit a decay rate."""


class ChecksumMismatch(IntegrityError):
    """A kernel cache failed its integrity check."""
