class ConfigurationError(ValueError):
    """Raised when parameters, datasets or splits cannot support a run"""


class DatasetError(ValueError):
    """Base class for problems reading a dataset file"""


class DatasetParseError(DatasetError):
    """A feature cell could not be read as a real number"""

    def __init__(self, path, row: int, column: int, value: str):
        self.path = path
        self.row = row          # 1-based line in the data file (after any header)
        self.column = column    # 0-based column index
        self.value = value
        super().__init__(f"{path}: row {row}, column {column}: cannot parse '{value}' as a number")


class SchemaError(DatasetError):
    """The label column does not describe a binary problem"""
