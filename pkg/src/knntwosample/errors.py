"""Exception hierarchy.

Two families matter to callers (and to the command line exit codes):
``ValidationError`` for bad inputs, ``NumericalError`` for computations
that could not reach a usable answer.
"""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class DegenerateInputError(ValidationError):
    """Input is well-formed but too small or too trivial to process."""


class UnsupportedScheduleError(ValidationError):
    """Neighbor-count schedule cannot be analysed symbolically."""


class NumericalError(ArithmeticError):
    """Base class for numerical failures."""


class NumericalDegeneracyError(NumericalError):
    """A density or probability vanished where it must not."""


class DegenerateTestError(NumericalError):
    """The test statistic has zero variance, so no standardization exists."""


class DegenerateDirectionError(NumericalError):
    """Local alternative lies along a direction with a(h) == b(h)."""


class ToleranceError(NumericalError):
    """An integrator did not reach the requested tolerance.

    The partial estimate is kept on the exception so callers can decide
    whether it is good enough.
    """

    def __init__(self, message, estimate=None, stderr=None):
        super().__init__(message)
        self.estimate = estimate
        self.stderr = stderr
