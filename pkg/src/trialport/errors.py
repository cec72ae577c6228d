"""Exception types shared across the package."""


class TrialportError(Exception):
    """Base class for all package errors."""


class ConfigError(TrialportError):
    """A config file or JSON document violates its schema."""


class DataError(TrialportError):
    """A dataset violates the observed-data contract."""


class NotIdentifiable(TrialportError):
    """The requested quantity is not identifiable under the study design."""


class InsufficientData(TrialportError):
    """Too few records to run the requested fit or estimator."""


class NoExternalRows(InsufficientData):
    """The dataset contains no sampled non-randomized records."""


class RankDeficient(TrialportError):
    """The design matrix of a fit is rank deficient."""


class NonConvergence(TrialportError):
    """The iterative solver failed to converge."""

    def __init__(self, message: str, grad_norm: float):
        super().__init__(message)
        self.grad_norm = grad_norm


class SeparationDetected(TrialportError):
    """Coefficients diverged during fitting (quasi-separated data)."""
