"""Exception types shared across the package."""


class MeshtexError(Exception):
    """Base class for all package-specific errors."""


class ParseError(MeshtexError):
    """Malformed OBJ record; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MissingUVError(ParseError):
    """A face corner lacks a texture-coordinate index."""


class DegenerateFaceError(MeshtexError):
    """Triangle with (numerically) zero area."""


class ShapeMismatchError(MeshtexError):
    """Array shape does not match what the operation requires."""


class OutOfRangeError(MeshtexError):
    """Index outside the valid texel/step range."""


class UnsupportedOrderError(MeshtexError):
    """Spherical-harmonic order outside the supported set {0, 1}."""


class BackendUnavailableError(MeshtexError):
    """Backend process/connection failure."""


class BackendShapeError(MeshtexError):
    """Backend returned tensors of an unexpected shape."""


class BackendTimeoutError(MeshtexError):
    """Backend did not answer within the configured timeout."""


class PullbackUnsupportedError(MeshtexError):
    """Backend cannot compute decoder vector-Jacobian products."""


class NoCoverageError(MeshtexError):
    """No texel was observed by any camera view."""
