"""Exception types shared across the package."""


class LiftFuseError(Exception):
    """Base class for package errors."""


class ConfigError(LiftFuseError, ValueError):
    """Inconsistent shapes, grids or configuration values."""


class NumericError(LiftFuseError, ArithmeticError):
    """Non-finite values or numerical divergence."""


class UsageError(LiftFuseError, RuntimeError):
    """API misuse, e.g. backward from a non-scalar node or a missing checkpoint."""
