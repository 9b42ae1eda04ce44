"""Exception hierarchy shared by all saliq modules.

Two broad families map onto CLI exit codes: DataError (bad or missing
input, exit 3) and NumericError (degenerate or failed computation,
exit 4).
"""


class SaliqError(Exception):
    """Base class for all saliq errors."""


class DataError(SaliqError):
    """Input data is missing, malformed, or violates a precondition."""


class NumericError(SaliqError):
    """A computation is degenerate or numerically failed."""


# --- signal ingestion ---------------------------------------------------

class UnreadableFileError(DataError):
    pass


class SampleRateMismatchError(DataError):
    pass


class ChannelMismatchError(DataError):
    pass


class AlignmentFailureError(DataError):
    """Cross-correlation peak below the confidence floor."""


class TooShortError(DataError):
    """Audio shorter than one analysis segment."""


class EmptySegmentError(DataError):
    """A planned segment contains no analysis frames."""


# --- model fitting ------------------------------------------------------

class DegenerateInputError(NumericError):
    """Constant or otherwise uninformative fitting input."""


class InsufficientDataError(DataError):
    """Fewer rows/points than the operation requires."""


class ZeroVarianceError(NumericError):
    """Correlation undefined because one argument has zero variance."""


class DegenerateGridError(NumericError):
    """Parameter search grid is empty."""


class AllUndefinedError(NumericError):
    """Every search candidate produced an undefined cost."""


class NonFiniteLossError(NumericError):
    """Training loss became NaN or infinite."""


# --- scoring / datasets -------------------------------------------------

class MissingBfError(DataError):
    """A required basis function model is absent."""


class LengthMismatchError(DataError):
    pass


class SchemaError(DataError):
    pass


class MissingFileError(DataError):
    pass


class DuplicateConditionError(DataError):
    pass


class InvalidSpecError(DataError):
    pass


class InvalidParametersError(DataError):
    pass
