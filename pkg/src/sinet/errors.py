"""Exception types raised across the package."""


class SINetError(Exception):
    """Base class for all package errors."""


class ConfigError(SINetError, ValueError):
    """Invalid configuration, e.g. a kernel larger than the feature map."""


class DimensionError(SINetError, ValueError):
    """Shape mismatch between operands.

    ``axis`` names the offending dimension when known.
    """

    def __init__(self, message, axis=None):
        super().__init__(message)
        self.axis = axis


class BuildError(SINetError):
    """An architecture table contradicts the shapes the layers produce."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class GradCheckError(SINetError):
    """Non-finite gradient encountered during a finite-difference check."""


class DivergenceError(SINetError):
    """Training produced a non-finite loss or gradient."""


class WeightFormatError(SINetError):
    """Weight container has a bad magic string or a malformed index."""


class WeightShapeError(SINetError):
    """Stored tensor shape does not match the architecture."""


class WeightTruncatedError(SINetError):
    """Payload ends before the bytes the index promises."""

    def __init__(self, message, tensor=None):
        super().__init__(message)
        self.tensor = tensor


class InputError(SINetError, ValueError):
    """Malformed user input such as a non-binary mask."""
