"""Exception types raised across the package."""


class AddaError(Exception):
    """Base class for every error raised by adda."""


class ShapeError(AddaError, ValueError):
    pass


class DomainError(AddaError, ValueError):
    pass


class ParameterError(AddaError, ValueError):
    pass


class DegenerateEmbeddingError(AddaError, ArithmeticError):
    pass


class NumericError(AddaError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}


class UndefinedAccuracyError(AddaError, ValueError):
    pass


class InfeasiblePlanError(AddaError, ValueError):
    pass


class FormatError(AddaError, ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(AddaError, ValueError):
    pass
