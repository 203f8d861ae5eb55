"""Exception types shared across the package."""


class FieldnetError(Exception):
    """Base class for all package errors."""


class ShapeError(FieldnetError):
    """Operands have incompatible shapes or extents."""


class DataError(FieldnetError):
    """Malformed or missing input data (files, streams, configs)."""


class UsageError(FieldnetError):
    """Bad command line: unknown flags, malformed overrides, missing args."""


class NumericalAbort(FieldnetError):
    """Training produced a non-finite loss and was stopped."""

    def __init__(self, message, iteration=None, learning_rate=None):
        super().__init__(message)
        self.iteration = iteration
        self.learning_rate = learning_rate
