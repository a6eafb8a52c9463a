"""Exception hierarchy.

Every error carries an ``exit_code`` used by the CLI: 2 for usage or
precondition problems, 3 for numerical failures.
"""

from __future__ import annotations


class QSSLabError(Exception):
    """Base class for all library errors."""

    exit_code = 3

    @property
    def kind(self) -> str:
        return type(self).__name__


class UsageError(QSSLabError):
    exit_code = 2


class NumericError(QSSLabError):
    exit_code = 3


# configuration / preconditions ------------------------------------------------

class ConfigNotFound(UsageError):
    pass


class ConfigError(UsageError):
    pass


class InvalidParameters(UsageError):
    pass


class UnsupportedC0(UsageError):
    pass


class PreconditionViolated(UsageError):
    pass


class NotInLambdaStar(UsageError):
    pass


class InsufficientPoints(UsageError):
    pass


class BoundsViolation(UsageError):
    pass


# model geometry ---------------------------------------------------------------

class NegativeDiscriminant(NumericError):
    """Raised when ``w`` lies outside the band where the nullclines h± exist."""


class DegenerateEigenvalue(NumericError):
    pass


class ZeroKM(NumericError):
    pass


class PhiZero(NumericError):
    pass


class SingularDfN(NumericError):
    pass


# integration ------------------------------------------------------------------

class IntegrationError(NumericError):
    pass


class StepSizeUnderflow(IntegrationError):
    pass


class MaxStepsExceeded(IntegrationError):
    pass


class NonFiniteDerivative(IntegrationError):
    pass


class NegativeConcentration(IntegrationError):
    pass


# estimation -------------------------------------------------------------------

class NonConvergence(NumericError):
    pass


class SingularNormalEquations(NumericError):
    pass
