"""Expected-hedging baseline and the standardized residual-flow series.

For every bar ``t`` past the first ``window`` bars, signed option volume is
regressed by OLS on the hedging drivers of bars ``[t - window, t)``::

    |underlying log return|, |change in open interest|, lagged signed volume, 1

The fitted baseline is applied to bar ``t``'s drivers (strictly out of
sample); the residual is z-scored by the population standard deviation of the
in-window fit residuals, floored at ``min_std_floor``.
"""

import csv
import io
import logging
import warnings
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import ConfigError, DegenerateDesignWarning, InsufficientWindow, SeriesTooShort
from .marketdata.records import MarketBar

logger = logging.getLogger(__name__)

REGRESSORS = ("abs_underlying_return", "abs_oi_change", "lagged_signed_volume", "intercept")
RESIDUAL_FIELDS = ("bar_start_ns", "expected_hedging_volume", "raw_residual", "delta_r")
MIN_WINDOW = 20


@dataclass(frozen=True)
class ResidualConfig:
    window: int = 60
    min_std_floor: float = 1e-9

    def __post_init__(self):
        if not isinstance(self.window, (int, np.integer)) or self.window < MIN_WINDOW:
            raise ConfigError(f"residual window must be an integer >= {MIN_WINDOW}, got {self.window!r}")
        if not self.min_std_floor > 0:
            raise ConfigError(f"min_std_floor must be > 0, got {self.min_std_floor!r}")


@dataclass(frozen=True)
class ResidualPoint:
    bar_start: int
    expected_hedging_volume: float
    raw_residual: float
    delta_r: float


def hedging_design(bars: Sequence[MarketBar], preceding: MarketBar = None) -> np.ndarray:
    """Driver matrix, one row per bar, columns in ``REGRESSORS`` order.

    The first row's open-interest change and lagged volume come from
    ``preceding`` when given, else they are 0.
    """
    n = len(bars)
    design = np.empty((n, 4))
    prev = preceding
    for i, bar in enumerate(bars):
        design[i, 0] = abs(bar.underlying_log_return)
        design[i, 1] = abs(bar.open_interest - prev.open_interest) if prev is not None else 0.0
        design[i, 2] = prev.signed_option_volume if prev is not None else 0.0
        design[i, 3] = 1.0
        prev = bar
    return design


def _baseline_ols(design, target):
    """OLS with an always-kept intercept (last column); zero-variance drivers are dropped.

    Returns (coefficients, in-sample residuals, dropped mask).
    """
    drivers = design[:, :-1]
    dropped = np.ptp(drivers, axis=0) == 0
    keep = np.append(~dropped, True)
    X = design[:, keep]
    # column equilibration keeps R well scaled when drivers differ by orders of magnitude
    scale = np.abs(X).max(axis=0)
    scale[scale == 0] = 1.0
    Q, R = np.linalg.qr(X / scale)
    diag = np.abs(np.diag(R))
    if diag.min() <= diag.max() * X.shape[0] * np.finfo(float).eps:
        beta = np.linalg.lstsq(X / scale, target, rcond=None)[0]
    else:
        beta = solve_triangular(R, Q.T @ target)
    coef = np.zeros(design.shape[1])
    coef[keep] = beta / scale
    return coef, target - design @ coef, dropped


class HedgingBaseline(RegressorMixin, BaseEstimator):
    """OLS baseline of signed option volume on hedging drivers.

    ``X`` holds the three non-constant drivers; an intercept is always fit.
    Zero-variance drivers are dropped (coefficient 0) with a
    :class:`DegenerateDesignWarning`.
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        design = np.column_stack([X, np.ones(len(y))])
        coef, resid, dropped = _baseline_ols(design, y.astype(float))
        if dropped.any():
            warnings.warn(
                f"zero-variance regressors dropped: {[REGRESSORS[i] for i in np.flatnonzero(dropped)]}",
                DegenerateDesignWarning, stacklevel=2,
            )
        self.coef_ = coef[:-1]
        self.intercept_ = float(coef[-1])
        self.dropped_ = dropped
        self.resid_std_ = float(resid.std())
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X)
        return X @ self.coef_ + self.intercept_


def fit_hedging_baseline(bars: Sequence[MarketBar], window: int = 60, preceding: MarketBar = None) -> np.ndarray:
    """Fit the baseline on the last ``window`` bars; coefficients in ``REGRESSORS`` order.

    When more bars are supplied, the one before the window seeds the first
    row's lag and open-interest change.
    """
    if len(bars) < window:
        raise InsufficientWindow(f"need {window} bars, got {len(bars)}")
    bars = list(bars)
    if preceding is None and len(bars) > window:
        preceding = bars[-window - 1]
    bars = bars[-window:]
    design = hedging_design(bars, preceding)
    target = np.array([b.signed_option_volume for b in bars], dtype=float)
    model = HedgingBaseline().fit(design[:, :-1], target)
    return np.append(model.coef_, model.intercept_)


def compute_residuals(bars: Sequence[MarketBar], config: ResidualConfig = ResidualConfig()) -> List[ResidualPoint]:
    w = config.window
    n = len(bars)
    if n <= w:
        raise SeriesTooShort(f"need more than {w} bars, got {n}")
    design = hedging_design(bars)
    signed = np.array([b.signed_option_volume for b in bars], dtype=float)
    points, degenerate = [], 0
    for t in range(w, n):
        coef, resid, dropped = _baseline_ols(design[t - w:t], signed[t - w:t])
        degenerate += bool(dropped.any())
        expected = float(design[t] @ coef)
        raw = float(signed[t] - expected)
        scale = max(float(resid.std()), config.min_std_floor)
        points.append(ResidualPoint(bars[t].bar_start, expected, raw, raw / scale))
    if degenerate:
        logger.info("%d of %d baseline windows dropped a zero-variance regressor", degenerate, n - w)
    return points


def format_residuals(points: Sequence[ResidualPoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESIDUAL_FIELDS)
    for p in points:
        writer.writerow([p.bar_start, repr(p.expected_hedging_volume), repr(p.raw_residual), repr(p.delta_r)])
    return buf.getvalue()


def read_residuals(text: str) -> List[ResidualPoint]:
    rows = list(csv.reader(io.StringIO(text)))
    return [ResidualPoint(int(r[0]), float(r[1]), float(r[2]), float(r[3])) for r in rows[1:] if r]
