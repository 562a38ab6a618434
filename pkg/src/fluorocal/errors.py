"""Exception hierarchy.

Every error carries a short ``category`` string that the command line
prints as the first token of its one-line failure message.
"""


class CalibrationError(ValueError):
    category = "error"


class ShapeError(CalibrationError):
    category = "shape"


class IndexRangeError(CalibrationError, IndexError):
    category = "index"


class NoSamplesError(CalibrationError):
    category = "no-samples"


class SingularSystemError(CalibrationError):
    category = "singular"


class NonFiniteError(CalibrationError, FloatingPointError):
    category = "non-finite"


class FormatError(CalibrationError):
    category = "format"


class ConfigError(CalibrationError):
    category = "config"
