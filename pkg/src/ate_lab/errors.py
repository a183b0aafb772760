"""Exception hierarchy shared by the estimators, asymptotics and experiments."""


class AteLabError(Exception):
    """Base class for every error raised by :mod:`ate_lab`."""


class ValidationError(AteLabError, ValueError):
    """Input data does not satisfy a structural requirement."""


class DegenerateDesign(ValidationError):
    """An arm is empty, or its weight sum is zero."""


class OverlapViolation(ValidationError):
    """A propensity value falls outside the overlap band ``(eps, 1 - eps)``."""


class EmptyCellArm(ValidationError):
    """A finite-support cell lacks treated or control units."""


class EmptySupport(ValidationError):
    """A covariate value was never seen when the cell table was fitted."""


class NumericalError(AteLabError, ArithmeticError):
    """A numerical routine failed (non-convergence, singularity, ...)."""


class FitFailure(NumericalError):
    """A nuisance fit did not converge or does not exist."""


class SingularDesign(NumericalError):
    """A least-squares moment matrix is singular even after the ridge fallback."""


class DegenerateDenominator(NumericalError):
    """The IPW excess over the efficiency bound is indistinguishable from zero."""


class UnsupportedModel(AteLabError, ValueError):
    """A population model lacks the structure an operation needs."""
