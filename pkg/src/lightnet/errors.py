"""Exception hierarchy shared across the package."""


class LightnetError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(LightnetError):
    """Tensor or layer shapes are incompatible."""


class NumericsError(LightnetError):
    """A computation produced (or received) NaN/Inf values."""


class ValidationError(LightnetError):
    """Invalid configuration, argument, or input file."""


class DataError(LightnetError):
    """Dataset files are missing, malformed, or inconsistent."""


class CheckpointError(LightnetError):
    """Checkpoint file is malformed, truncated, or mismatched."""
