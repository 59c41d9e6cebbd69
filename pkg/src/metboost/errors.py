"""Exception types raised across the package."""

import numpy as np


class MetboostError(Exception):
    """Base class for all package errors."""


class SchemaError(MetboostError, ValueError):
    """A required column is missing or a column layout is invalid."""


class DataError(MetboostError, ValueError):
    """A cell value violates the data contract (e.g. a missing outcome)."""


class EmptyInputError(DataError):
    pass


class ParameterError(MetboostError, ValueError):
    """An argument is outside its documented range."""


class FormatError(MetboostError, ValueError):
    """A model file could not be parsed."""


class CapacityError(MetboostError, MemoryError):
    pass


class RankError(MetboostError, np.linalg.LinAlgError):
    pass


class TuningError(MetboostError, RuntimeError):
    """A fit failed inside cross-validation; the message names cell and fold."""


class UnsupportedModeError(MetboostError, ValueError):
    pass
