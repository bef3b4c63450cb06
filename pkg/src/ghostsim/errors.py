"""Exception and warning types raised across the package."""


class GhostSimError(Exception):
    """Base class for every error raised by ghostsim."""


class ValidationError(GhostSimError, ValueError):
    """An argument or configuration value violates its contract."""


class SamplingError(ValidationError):
    """The grid is too coarse for the requested speckle or propagation."""


class InsufficientDataError(GhostSimError):
    """Too few realizations to form the requested estimate."""


class WindowingError(ValidationError):
    """A finite beam would spill past the guard region of the grid."""


class ConfigError(ValidationError):
    """Malformed configuration text; carries the offending line when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OutputError(GhostSimError, OSError):
    """Writing an output artifact failed."""


class CoarseGridWarning(UserWarning):
    """Pitch exceeds half a wavelength; only paraxial content is represented."""
