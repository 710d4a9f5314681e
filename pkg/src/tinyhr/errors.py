"""Exception hierarchy shared by every tinyhr module."""


class TinyHRError(Exception):
    """Base class for all library errors."""


# -- signal / dsp ----------------------------------------------------------

class DegenerateFrame(TinyHRError, ValueError):
    pass


class InvalidFactor(TinyHRError, ValueError):
    pass


class OutOfBand(TinyHRError, ValueError):
    pass


class InvalidWindow(TinyHRError, ValueError):
    pass


class InvalidTaps(TinyHRError, ValueError):
    pass


class NotAPeak(TinyHRError, ValueError):
    pass


class InsufficientPeaks(TinyHRError):
    pass


# -- nn --------------------------------------------------------------------

class ShapeError(TinyHRError, ValueError):
    pass


class ModelFormatError(TinyHRError):
    """A model file could not be decoded."""


class BadMagic(ModelFormatError):
    pass


class TruncatedPayload(ModelFormatError):
    pass


class ShapeInconsistency(ModelFormatError):
    pass


class ChecksumMismatch(ModelFormatError):
    pass


class TrainingDiverged(TinyHRError):
    pass


# -- data / bench / config -------------------------------------------------

class DataError(TinyHRError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MetricError(TinyHRError, ValueError):
    pass


class ConfigError(TinyHRError, ValueError):
    pass
