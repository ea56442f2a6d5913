"""Quasi-parabolic composition operators on the Hardy space of the upper half-plane.

Finite-section realisations via a Toeplitz-times-Fourier-multiplier series,
an independent Cauchy-integral oracle, and essential-spectrum predictions
built from spiral sets.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    ConvergenceError,
    DomainError,
    EigensolverError,
    ExpansionInfeasible,
    HypothesisViolation,
    NumericalError,
    QuasiParabolicError,
    ResourceError,
    ToleranceUnreachable,
)

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DomainError",
    "EigensolverError",
    "ExpansionInfeasible",
    "HypothesisViolation",
    "NumericalError",
    "QuasiParabolicError",
    "ResourceError",
    "ToleranceUnreachable",
    "__version__",
]
