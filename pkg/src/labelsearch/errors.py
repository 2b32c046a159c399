"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, data and
validation problems exit 2, numerical failures exit 3.
"""


class LabelSearchError(Exception):
    """Base class for all package errors."""


class UsageError(LabelSearchError):
    """Bad command line or incompatible options."""


class FormatError(LabelSearchError):
    """A manifest or data file does not match its declared layout."""


class DataError(LabelSearchError):
    """Values are structurally valid but unusable (NaN/Inf, zero rows, ...)."""


class InputError(LabelSearchError):
    """Inconsistent in-memory inputs (shape mismatches, bad label ranges)."""


class ConfigurationError(LabelSearchError):
    """A configuration value is out of its valid range."""


class DegenerateParameterError(LabelSearchError):
    """Rank-deficient prototype parameters; the caller should re-initialize."""


class DivergenceError(LabelSearchError):
    """Inner optimization produced non-finite iterates."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class GenerationError(LabelSearchError):
    """Synthetic data failed its separability verification."""
