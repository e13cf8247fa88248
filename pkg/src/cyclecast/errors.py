"""Exception types shared across the package."""


class CycleCastError(Exception):
    pass


class ConfigError(CycleCastError, ValueError):
    """A configuration object violates one of its invariants."""


class ShapeError(CycleCastError, ValueError):
    pass


class EmptyInputError(CycleCastError, ValueError):
    pass


class InsufficientHistoryError(CycleCastError, ValueError):
    """Raised when a series is too short; ``required`` is the minimum length."""

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class DistributionInfeasibleError(CycleCastError):
    """Rejection sampling could not land inside the configured bounds."""


class SingularDesignError(CycleCastError, ValueError):
    """Design matrix is rank deficient; ``column`` is the first dependent input column."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class DivergedError(CycleCastError, FloatingPointError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
