"""Exception types shared across the library."""


class CbOptError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(CbOptError, ValueError):
    """Invalid parameters, shapes, or incompatible component wiring."""


class NumericDomainError(CbOptError, ArithmeticError):
    """A numeric quantity left its valid domain (NaN, infinity, ...)."""


class IngestionError(CbOptError, ValueError):
    """Malformed input data.  ``row`` is the 1-based data row at fault."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class DegeneratePortfolioError(CbOptError, ValueError):
    """Portfolio variance fell below the configured floor."""


class EstimationError(CbOptError, ValueError):
    """Not enough data to estimate the requested statistics."""
