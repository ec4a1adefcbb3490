"""Exception types shared across the package."""


class StgridError(Exception):
    """Base class for package errors."""


class ConfigurationError(StgridError):
    """Invalid dimensions, kernel shapes, or run configuration."""


class DomainError(StgridError):
    """Input violates a mathematical precondition (non-simplex, nonpositive, ...)."""


class DegenerateBeliefError(StgridError):
    """Bayes correction denominator underflowed; belief or O is inconsistent."""


class TrainingDivergedError(StgridError):
    """NaN gradient or loss during a learner update."""
