"""Exception hierarchy.

Validation errors (bad scenarios, infeasible inputs) and numerical failures
(non-convergence, breakdown) are kept apart so callers, including the CLI,
can map them to distinct exit codes.
"""


class BailoutError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(BailoutError, ValueError):
    pass


class NumericalError(BailoutError, ArithmeticError):
    pass


class NegativeEntry(ValidationError):
    pass


class NonzeroDiagonal(ValidationError):
    pass


class InitiallyInsolvent(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class ZeroBudget(ValidationError):
    pass


class InfeasibleStart(ValidationError):
    pass


class GenerationFailed(ValidationError):
    pass


class NoConvergence(NumericalError):
    pass


class NumericalBreakdown(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class DivergenceDetected(NumericalError):
    pass


class SamplingStalled(NumericalError):
    pass
