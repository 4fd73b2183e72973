"""Exception types shared across the toolkit."""


class PokError(Exception):
    """Base class for all toolkit errors."""


class LengthError(PokError, ValueError):
    """Bit strings or blocks have incompatible lengths."""


class DomainError(PokError, ValueError):
    """A physical or statistical parameter is outside its valid range."""


class SampleSizeError(PokError, ValueError):
    """Not enough samples for the requested estimator."""


class FormatError(PokError, ValueError):
    """A serialized record is malformed (bad magic, version, CRC, ...)."""


class SolverError(PokError, RuntimeError):
    """The resistor-network solve did not reach the requested residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ProgramError(PokError, RuntimeError):
    """A PCM programming pulse did not leave exactly one plugged contact."""


class OverProgramError(ProgramError):
    """Both bottom paths melted during the pulse."""


class UnderProgramError(ProgramError):
    """Neither bottom path melted during the pulse."""


class WeakCellError(PokError):
    """Read contrast of a PCM cell is below the configured minimum.

    The bit is still available on the exception so callers can decide
    whether to accept it.
    """

    def __init__(self, message, bit, contrast, index=None):
        super().__init__(message)
        self.bit = bit
        self.contrast = contrast
        self.index = index


class EnrollError(PokError):
    """The device could not be read during enrollment."""


class KeyMismatchError(PokError):
    """Reconstructed key does not match the enrolled key-check value."""
