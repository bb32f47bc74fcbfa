"""Exception types shared across the package."""


class DecompcastError(Exception):
    """Base class for all library errors."""


class ConfigError(DecompcastError, ValueError):
    """Configuration or input could not be parsed."""


class ImputeAbort(DecompcastError):
    """A gap is too long to impute; the caller should drop missing rows instead."""

    def __init__(self, gap_length, max_gap):
        super().__init__(f"gap of {gap_length} consecutive missing values exceeds {max_gap}")
        self.gap_length = gap_length
        self.max_gap = max_gap


class DegenerateScale(DecompcastError, ValueError):
    """The normalization denominator is zero (constant input)."""


class InsufficientData(DecompcastError, ValueError):
    pass


class InvalidChangepoint(DecompcastError, ValueError):
    pass


class UnknownCountry(DecompcastError, KeyError):
    pass


class ShapeMismatch(DecompcastError, ValueError):
    pass


class NonFiniteGradient(DecompcastError, FloatingPointError):
    pass


class DivergedTest(DecompcastError):
    """Every loss recorded during a learning-rate range test was non-finite."""


class ZeroDenominator(DecompcastError, ZeroDivisionError):
    pass


class NonStationary(DecompcastError, ValueError):
    pass


class LengthMismatch(DecompcastError, ValueError):
    pass


class MissingRegressor(DecompcastError, KeyError):
    """Future regressor values are unavailable for a requested timestamp."""
