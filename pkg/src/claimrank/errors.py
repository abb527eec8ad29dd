"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: validation problems exit 1,
numerical failures exit 3. Plain ``OSError`` is left alone and exits 2.
"""


class ClaimrankError(Exception):
    """Base class for all package errors."""


class ValidationError(ClaimrankError, ValueError):
    """Input violates a documented contract."""


class ParseError(ValidationError):
    """A row of a TSV/CSV file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class ConfigError(ValidationError):
    """Bad hyper-parameter or configuration value."""


class ShapeError(ValidationError):
    """Array dimensions do not match what an operation expects."""


class FormatError(ValidationError):
    """Unsupported file format (e.g. a non-PCM WAV)."""


class CoverageError(ValidationError):
    """Predictions do not cover a split exactly once."""

    def __init__(self, message, missing=(), extra=()):
        super().__init__(message)
        self.missing = list(missing)
        self.extra = list(extra)


class NumericalError(ClaimrankError, ArithmeticError):
    """Training diverged (NaN or infinite loss)."""
