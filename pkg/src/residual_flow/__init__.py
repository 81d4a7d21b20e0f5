"""Residual option-order-flow toolkit.

Ticks are aggregated into bars, a rolling hedging baseline turns signed
option volume into a standardized residual, and a linear model of the next
bar's option move is calibrated and walk-forward tested on it.
"""

from . import backtest, calibrate, impliedvol, marketdata, residual, synth
from .errors import (
    CalibrationError, ConfigError, DataError, PricingError, ResidualFlowError,
)

__version__ = "0.1.0"

__all__ = [
    "backtest", "calibrate", "impliedvol", "marketdata", "residual", "synth",
    "CalibrationError", "ConfigError", "DataError", "PricingError", "ResidualFlowError",
]
