"""Exception types shared across the package."""


class AdvectaError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(AdvectaError, ValueError):
    """Bad grid sizes, malformed models or run configuration."""

    exit_code = 2


class InvalidSpectrumError(AdvectaError, ValueError):
    """A complex coefficient table violates conjugate symmetry."""

    exit_code = 3


class DataValidationError(AdvectaError, ValueError):
    """Input data is inconsistent with the model (grid, spacing, lengths)."""

    exit_code = 3


class NumericError(AdvectaError, ArithmeticError):
    """Non-finite values or a singular/indefinite matrix where one is not allowed."""

    exit_code = 4

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot
