"""Exception hierarchy shared across the package."""


class MpcrnError(Exception):
    """Base class for all package-specific errors."""


class InvalidInput(MpcrnError):
    """Input data violates a documented precondition (bad audio, bad chunk size...)."""


class ShapeError(MpcrnError):
    """Array shape is incompatible with a layer or operation."""


class UsageError(MpcrnError):
    """API misuse, e.g. backward() without a recorded forward pass."""


class ParseError(MpcrnError):
    """Malformed file: WAV container, config file, or checkpoint."""


class NumericalError(MpcrnError):
    """Non-finite values or a failed numerical verification."""
