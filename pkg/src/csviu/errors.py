"""Exception hierarchy for the csviu package."""

__all__ = [
    "CsviuError",
    "ParseError",
    "DimensionError",
    "DomainError",
    "NotStableError",
    "ConvergenceError",
    "SingularOperatorError",
    "InternalInconsistencyError",
]


class CsviuError(Exception):
    """Base class for all csviu-specific errors."""


class ParseError(CsviuError):
    """A model or config file could not be parsed against its schema."""


class DimensionError(CsviuError):
    """Matrix or vector shapes are inconsistent with the declared sizes."""


class DomainError(CsviuError):
    """A parameter lies outside the domain of the requested quantity."""


class NotStableError(CsviuError):
    """The perturbed Lyapunov equation has no positive-semidefinite solution.

    Carries the computed spectral radius so callers can report how far
    from stability the instance is.
    """

    def __init__(self, message, spectral_radius=None):
        super().__init__(message)
        self.spectral_radius = spectral_radius


class ConvergenceError(CsviuError):
    """An iterative routine failed to converge within its budget."""


class SingularOperatorError(CsviuError):
    """A linear operator that must be inverted is singular."""


class InternalInconsistencyError(CsviuError):
    """Equivalent stability criteria disagreed beyond tolerance.

    This signals an implementation bug, not a property of the model;
    it is raised only away from marginal (|radius - 1| < 1e-6) cases.
    """
