"""Exception hierarchy shared by all modules."""


class QuasiParabolicError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(QuasiParabolicError, ValueError):
    """A run configuration failed to parse or validate."""


class DomainError(QuasiParabolicError, ValueError):
    """A symbol formula is singular at the requested point."""


class HypothesisViolation(QuasiParabolicError):
    """The standing assumption ``Im psi > eps > 0`` does not hold.

    ``best`` carries whatever partial result was available when the
    violation was detected (e.g. the best ``(alpha, delta)`` pair).
    """

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


class ExpansionInfeasible(HypothesisViolation):
    """The contraction ratio of the series expansion is not below one."""


class NumericalError(QuasiParabolicError):
    """Base class for numerical failures."""


class ToleranceUnreachable(NumericalError):
    """The requested series tolerance needs more than ``M_max`` terms."""

    def __init__(self, msg, achievable_tail=None):
        super().__init__(msg)
        self.achievable_tail = achievable_tail


class ConvergenceError(NumericalError):
    """An iterative method did not converge; ``last`` holds the last iterate."""

    def __init__(self, msg, last=None):
        super().__init__(msg)
        self.last = last


class EigensolverError(NumericalError):
    """The dense eigensolver failed."""


class ResourceError(NumericalError):
    """A dense assembly would exceed the configured memory cap."""
