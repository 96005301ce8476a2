"""Exception hierarchy shared by all modules."""


class RoughMVError(Exception):
    """Base class for every error raised by this package."""


class DomainError(RoughMVError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class NumericError(RoughMVError, ArithmeticError):
    """A numerical scheme failed (NaN, non-convergence, lost precision)."""


class MittagLefflerError(NumericError):
    """Series or asymptotic evaluation of the Mittag-Leffler function did not converge."""


class ExplosionError(NumericError):
    """A Riccati-Volterra solution exceeded the blow-up threshold.

    Attributes
    ----------
    time : float
        First grid time at which the threshold was crossed.
    bracket : tuple of float
        ``(t_prev, time)``; the explosion happened inside this step.
    """

    def __init__(self, message, time, bracket):
        super().__init__(message)
        self.time = float(time)
        self.bracket = (float(bracket[0]), float(bracket[1]))


class ConsistencyError(NumericError):
    """Two independent evaluations of the same closed-form quantity disagree."""


class AdmissibilityError(RoughMVError):
    """A parameter choice fails a sufficient admissibility pre-check."""


class ConfigError(RoughMVError, ValueError):
    """Malformed or inconsistent run configuration."""
