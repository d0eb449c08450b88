"""Exception types shared across the package."""


class SchemaError(ValueError):
    """A CSV file does not match the documented schema (e.g. missing column)."""


class CsvParseError(ValueError):
    """A CSV cell could not be parsed; carries the offending row/column."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class DegenerateDataError(ValueError):
    """Training data or label vector contains a single class."""


class DegenerateNeighborhoodError(ValueError):
    """Local sampling produced samples of only one predicted class."""


class AlreadyFavorableError(ValueError):
    """The input instance already receives the favorable prediction."""


class InvalidBracketError(ValueError):
    """Bisection endpoints carry equal predicted labels."""


class ModelFileError(ValueError):
    """A model file is malformed or truncated."""


class ModelVersionError(ModelFileError):
    """A model file carries an unsupported format version."""
