"""Exception types raised across the package."""


class OAFlowError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(OAFlowError, ValueError):
    """Array shapes are incompatible or too small."""


class DomainError(OAFlowError, ValueError):
    """Input lies outside the domain of the operation (non-SPD, non-interior, ...)."""


class ConfigError(OAFlowError, ValueError):
    """Invalid configuration value or inconsistent inputs."""


class IngestionError(OAFlowError, ValueError):
    """External data could not be ingested."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class ConvergenceError(OAFlowError, RuntimeError):
    """An iterative method hit its iteration cap before reaching tolerance.

    The last iterate and its residual are attached so callers can decide
    whether the approximation is still usable.
    """

    def __init__(self, message, residual, iterate=None):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual
        self.iterate = iterate
