"""Exception hierarchy shared by every module.

The CLI maps the top-level families onto exit codes: ``ConfigError`` -> 2,
``OSError`` -> 3, ``DataError`` -> 4, ``CalibrationError`` -> 5.
"""


class ResidualFlowError(Exception):
    """Base class for all package errors."""


class ConfigError(ResidualFlowError, ValueError):
    pass


# --- data ------------------------------------------------------------------

class DataError(ResidualFlowError):
    """Input data cannot support the requested computation."""


class MalformedRow(DataError):
    def __init__(self, line, message):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
        self.reason = message


class InvariantViolation(MalformedRow):
    """A row parsed but breaks a record invariant (negative price, crossed quote...)."""


class UnsortedInput(DataError):
    pass


class NoData(DataError):
    pass


class StaleQuote(DataError):
    pass


class InsufficientWindow(DataError):
    pass


class SeriesTooShort(DataError):
    pass


class EmptyMatrix(DataError):
    pass


class TooFewRows(DataError):
    pass


class LengthMismatch(DataError, ValueError):
    pass


class Empty(DataError, ValueError):
    pass


# --- pricing ---------------------------------------------------------------

class PricingError(ResidualFlowError, ValueError):
    pass


class DomainError(PricingError):
    pass


class ArbitrageBound(PricingError):
    pass


class VolatilityOutOfRange(PricingError):
    """Price is arbitrage-free but outside what the volatility bracket can produce."""


# --- calibration -----------------------------------------------------------

class CalibrationError(ResidualFlowError):
    pass


class RankDeficient(CalibrationError):
    pass


class NoConvergence(CalibrationError):
    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class DegenerateDesignWarning(UserWarning):
    """A zero-variance regressor was dropped from a least-squares design."""
