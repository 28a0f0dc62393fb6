"""Exception types shared across the package."""


class MpcnError(Exception):
    """Base class for all package errors."""


class ShapeError(MpcnError, ValueError):
    """Operand shapes are incompatible."""


class ConfigError(MpcnError, ValueError):
    """A hyperparameter or switch has an invalid value."""


class NumericError(MpcnError, FloatingPointError):
    """A computation produced NaN/Inf or a gradient is not finite."""


class DataFormatError(MpcnError, ValueError):
    """Input data is malformed beyond the tolerated rate."""


class CheckpointError(MpcnError, ValueError):
    """A checkpoint or snapshot is incompatible with the current code or data."""
