"""Exception hierarchy shared by every module."""


class ArtifactError(Exception):
    """Base class for all package errors."""


class InvalidMetricError(ArtifactError):
    pass


class UnsupportedMetricError(ArtifactError):
    pass


class EmptyDomainError(ArtifactError):
    pass


class DomainError(ArtifactError):
    pass


class PoleError(ArtifactError):
    pass


class DegenerateDifferentialError(ArtifactError):
    pass


class DivergedFieldError(ArtifactError):
    pass


class InfeasibleConstantsError(ArtifactError):
    pass


class ConstructionFailureError(ArtifactError):
    pass


class ConfigurationError(ArtifactError):
    pass


class NoConvergenceError(ArtifactError):
    """Raised when an iteration cap is hit; carries the best residual and the trace."""

    def __init__(self, message, best_residual=None, trace=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.trace = list(trace) if trace is not None else []


class SolverInconsistencyError(ArtifactError):
    pass


class ExhaustionInconsistencyError(ArtifactError):
    pass
