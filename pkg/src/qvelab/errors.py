"""Exception hierarchy.

Input problems derive from :class:`QveInputError` (a ``ValueError``), numeric
breakdowns from :class:`QveNumericError`. The CLI maps the first family to exit
code 2 and the second to exit code 3.
"""

from __future__ import annotations


class QveError(Exception):
    """Base class for every error raised by qvelab."""


class QveInputError(QveError, ValueError):
    """Malformed or inconsistent input data."""


class QveNumericError(QveError, ArithmeticError):
    """A numerical procedure could not deliver its contract."""


# -- model -----------------------------------------------------------------

class AsymmetricKernel(QveInputError):
    pass


class NegativeEntry(QveInputError):
    pass


class DimensionMismatch(QveInputError):
    pass


# -- solver ----------------------------------------------------------------

class NonPositiveImaginaryPart(QveInputError):
    pass


class ZeroDistance(QveInputError):
    pass


class MaxIterExceeded(QveNumericError):
    """Iteration budget exhausted before the residual reached the tolerance.

    The last iterate and its residual are kept so callers can inspect or
    resume. ``where`` carries grid coordinates when raised from a grid solve.
    """

    def __init__(self, message, last_iterate=None, residual=float("nan"), where=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
        self.where = where


class SingularJacobian(QveNumericError):
    pass


# -- density ---------------------------------------------------------------

class InsufficientEtaLevels(QveInputError):
    pass


class TooCloseToGrid(QveInputError):
    pass


# -- stability -------------------------------------------------------------

class ZeroComponent(QveNumericError):
    pass


class GapTooSmall(QveNumericError):
    pass


class SingularMatrix(QveNumericError):
    pass


# -- singularity -----------------------------------------------------------

class AmbiguousSign(QveNumericError):
    pass


class DivisionDegenerate(QveNumericError):
    pass


class EmptyWindow(QveInputError):
    pass


class NonPositiveDensity(QveNumericError):
    pass


class TooLargeForExact(QveInputError):
    pass


# -- ensembles -------------------------------------------------------------

class DegenerateBlock(QveInputError):
    pass


class AlphaOutOfRange(QveInputError):
    pass


class BranchUndefined(QveInputError):
    pass


class ComplexKernel(QveInputError):
    pass


class NegativeKernel(QveInputError):
    pass


# -- montecarlo ------------------------------------------------------------

class EmptySamples(QveInputError):
    pass
