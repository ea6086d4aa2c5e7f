"""Exception types shared across the package."""


class FeduaError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(FeduaError, ValueError):
    """A model or run configuration is internally inconsistent."""


class ShapeError(FeduaError, ValueError):
    """An array has the wrong shape for the requested operation."""


class StateError(FeduaError, RuntimeError):
    """An operation was called in the wrong order (e.g. backward before forward)."""


class CalibrationError(FeduaError, ValueError):
    """Threshold calibration cannot satisfy the requested target."""


class ParseError(FeduaError, ValueError):
    """A data or checkpoint file is malformed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
