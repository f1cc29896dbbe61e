"""Exception types shared across the package."""


class DatasetParseError(ValueError):
    """Raised when a dataset file cannot be parsed.

    ``record`` is the zero-based index of the offending set record, or
    ``None`` when the problem is in the file header.
    """

    def __init__(self, message, record=None):
        self.record = record
        if record is not None:
            message = f"record {record}: {message}"
        super().__init__(message)


class NotFittedError(RuntimeError):
    """Raised when a pipeline is queried before ``fit``."""


class FormatError(ValueError):
    """Raised when a binary artifact has a bad magic or truncated payload."""
