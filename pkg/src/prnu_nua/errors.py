"""Exception types raised across the package."""


class PrnuError(Exception):
    """Base class for all errors raised by prnu_nua."""


class DimensionError(PrnuError, ValueError):
    """Array shapes are incompatible or too small for the requested operation."""


class InsufficientSizeError(DimensionError):
    """Not enough samples (e.g. lattice lags) to compute a statistic."""


class DegenerateInputError(PrnuError, ValueError):
    """Input has zero norm or zero energy where a nonzero value is required."""


class StateError(PrnuError, RuntimeError):
    """An object is not in the state an operation requires."""


class RangeError(PrnuError, ValueError):
    """A value lies outside its admissible range."""


class FormatError(PrnuError, ValueError):
    """A binary file does not follow the expected layout."""


class ExifParseError(PrnuError, ValueError):
    """Malformed JPEG/TIFF metadata.

    :param message: what went wrong
    :param offset: byte offset in the input at which parsing failed
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
