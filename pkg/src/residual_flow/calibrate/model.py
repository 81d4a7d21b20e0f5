"""Calibrated linear model of the next-bar option move.

    move[t+1] = intercept + alpha*V' + beta*OI' + gamma*sigma' + lambda*delta_r

Primes denote training-slice standardization; ``delta_r`` is already a
z-score and passes through unscaled. Standard deviations are population
(ddof=0). Columns with no variation in the training slice, or excluded by
the caller, get a zero coefficient.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError, RankDeficient, TooFewRows
from . import solvers
from .features import COLUMNS, FeatureMatrix, FeatureRow

METHODS = ("ols", "ridge", "lasso")
PASSTHROUGH = ("delta_r",)
ROWS_PER_COLUMN = 5
DEFAULT_GRID = (0.0,) + tuple(float(v) for v in np.logspace(-4, 1, 13))


@dataclass(frozen=True)
class Scaler:
    means: Tuple[float, ...]
    stds: Tuple[float, ...]
    excluded: Tuple[str, ...] = ()

    @classmethod
    def fit(cls, X, exclude: Sequence[str] = ()):
        X = np.asarray(X, dtype=float)
        means, stds, excluded = [], [], []
        for j, name in enumerate(COLUMNS):
            col = X[:, j]
            if name in PASSTHROUGH:
                means.append(0.0)
                stds.append(1.0)
            else:
                means.append(float(col.mean()))
                stds.append(float(col.std()))
            if name in exclude or np.ptp(col) == 0:
                excluded.append(name)
        return cls(tuple(means), tuple(stds), tuple(excluded))

    @property
    def retained(self):
        return np.array([c not in self.excluded for c in COLUMNS])

    def transform(self, X):
        """Standardize; excluded columns are returned as zeros."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        keep = self.retained
        out = np.zeros_like(X)
        mu = np.array(self.means)[keep]
        sd = np.array(self.stds)[keep]
        out[:, keep] = (X[:, keep] - mu) / sd
        return out

    def to_dict(self):
        return {"means": list(self.means), "stds": list(self.stds), "excluded": list(self.excluded)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(map(float, d["means"])), tuple(map(float, d["stds"])), tuple(d["excluded"]))


@dataclass(frozen=True)
class CalibratedModel:
    method: str
    penalty: float
    intercept: float
    coefficients: Tuple[float, float, float, float]
    epsilon_scale: float
    scaler: Scaler
    training_range: Tuple[int, int]
    column_order: Tuple[str, ...] = field(default=COLUMNS)

    alpha = property(lambda self: self.coefficients[0])
    beta = property(lambda self: self.coefficients[1])
    gamma = property(lambda self: self.coefficients[2])
    lambda_ = property(lambda self: self.coefficients[3])

    def to_dict(self):
        return {
            "method": self.method,
            "penalty": self.penalty,
            "intercept": self.intercept,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "lambda": self.lambda_,
            "epsilon_scale": self.epsilon_scale,
            "scaler": self.scaler.to_dict(),
            "training_range": {"first_ns": self.training_range[0], "last_ns": self.training_range[1]},
            "column_order": list(self.column_order),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d):
        if list(d["column_order"]) != list(COLUMNS):
            raise ConfigError(f"unsupported column order {d['column_order']}")
        return cls(
            method=d["method"], penalty=float(d["penalty"]), intercept=float(d["intercept"]),
            coefficients=tuple(float(d[k]) for k in ("alpha", "beta", "gamma", "lambda")),
            epsilon_scale=float(d["epsilon_scale"]), scaler=Scaler.from_dict(d["scaler"]),
            training_range=(int(d["training_range"]["first_ns"]), int(d["training_range"]["last_ns"])),
            column_order=tuple(d["column_order"]),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def predict_many(self, X) -> np.ndarray:
        Z = self.scaler.transform(X)
        return self.intercept + Z @ np.array(self.coefficients)


def predict(model: CalibratedModel, features) -> float:
    """Point prediction for one row (a :class:`FeatureRow` or ``[V, OI, sigma, delta_r]``)."""
    if isinstance(features, FeatureRow):
        features = features.features()
    x = np.asarray(features, dtype=float)
    if x.shape != (len(COLUMNS),) or not np.isfinite(x).all():
        raise ValueError(f"need {len(COLUMNS)} finite features, got {features!r}")
    return float(model.predict_many(x[None, :])[0])


def _rows(fm: FeatureMatrix, train_slice):
    return fm if train_slice is None else fm[train_slice]


def fit(fm: FeatureMatrix, train_slice=None, *, method="ols", penalty=0.0, exclude=()) -> CalibratedModel:
    """Fit ``method`` on ``fm[train_slice]`` (whole matrix when None)."""
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {method!r}")
    if not (penalty >= 0 and math.isfinite(penalty)):
        raise ConfigError(f"penalty must be finite and >= 0, got {penalty!r}")
    if method == "ols":
        penalty = 0.0
    unknown = set(exclude) - set(COLUMNS)
    if unknown:
        raise ConfigError(f"unknown feature(s) to exclude: {sorted(unknown)}")
    train = _rows(fm, train_slice)
    n_cols = len(COLUMNS) - len(set(exclude))
    if method != "lasso" and len(train) < ROWS_PER_COLUMN * max(n_cols, 1):
        raise TooFewRows(f"{method} needs >= {ROWS_PER_COLUMN * n_cols} training rows, got {len(train)}")
    if len(train) < 2:
        raise TooFewRows(f"need at least 2 training rows, got {len(train)}")

    scaler = Scaler.fit(train.X, exclude)
    keep = scaler.retained
    Z = scaler.transform(train.X)[:, keep]
    if method == "ols":
        slopes, intercept = solvers.ols(Z, train.y)
    elif method == "ridge":
        slopes, intercept = solvers.ridge(Z, train.y, penalty)
    else:
        slopes, intercept = solvers.lasso(Z, train.y, penalty)
    coef = np.zeros(len(COLUMNS))
    coef[keep] = slopes
    resid = train.y - intercept - Z @ slopes
    return CalibratedModel(
        method=method, penalty=float(penalty), intercept=float(intercept),
        coefficients=tuple(float(c) for c in coef),
        epsilon_scale=float(np.sqrt(np.mean(resid ** 2))), scaler=scaler,
        training_range=(int(train.bar_start[0]), int(train.bar_start[-1])),
    )


def fit_ols(fm, train_slice=None, *, exclude=()):
    return fit(fm, train_slice, method="ols", exclude=exclude)


def fit_ridge(fm, train_slice=None, penalty=0.0, *, exclude=()):
    return fit(fm, train_slice, method="ridge", penalty=penalty, exclude=exclude)


def fit_lasso(fm, train_slice=None, penalty=0.0, *, exclude=()):
    return fit(fm, train_slice, method="lasso", penalty=penalty, exclude=exclude)


def inner_folds(n_rows, folds):
    """Expanding-window walk-forward folds over ``n_rows``: ``folds + 1`` equal blocks,
    fold ``j`` trains on blocks ``[0, j]`` and tests on block ``j + 1``."""
    block = n_rows // (folds + 1)
    return [(slice(0, j * block), slice(j * block, (j + 1) * block)) for j in range(1, folds + 1)]


def select_penalty(fm: FeatureMatrix, method, grid=DEFAULT_GRID, folds=2, *, train_slice=None,
                   exclude=()) -> Tuple[float, dict]:
    """Pick the grid penalty with the lowest mean out-of-fold MSE.

    Folds come from :func:`inner_folds` over ``fm[train_slice]``, so every
    validation row follows its training rows. Ties (relative 1e-12) go to the
    larger penalty. A penalty whose fit is rank deficient in some fold scores
    ``inf`` there. Returns ``(penalty, {penalty: [fold mse, ...]})``.
    """
    if method not in ("ridge", "lasso"):
        raise ConfigError(f"penalty selection needs ridge or lasso, got {method!r}")
    grid = sorted(set(float(g) for g in grid))
    if not grid:
        raise ConfigError("penalty grid is empty")
    if folds < 2:
        raise ConfigError("need at least 2 folds")
    data = _rows(fm, train_slice)
    n_cols = len(COLUMNS) - len(set(exclude))
    if len(data) // (folds + 1) < ROWS_PER_COLUMN * max(n_cols, 1):
        raise TooFewRows(f"{len(data)} rows cannot hold {folds} walk-forward folds")
    if len(grid) == 1:
        return grid[0], {grid[0]: []}

    scores = {}
    for pen in grid:
        fold_mse = []
        for tr, te in inner_folds(len(data), folds):
            try:
                model = fit(data, tr, method=method, penalty=pen, exclude=exclude)
            except RankDeficient:
                fold_mse.append(math.inf)
                continue
            test = data[te]
            err = model.predict_many(test.X) - test.y
            fold_mse.append(math.fsum(err ** 2) / len(err))
        scores[pen] = fold_mse
    means = {pen: math.fsum(v) / len(v) for pen, v in scores.items()}
    best = min(means.values())
    tied = [pen for pen, m in means.items() if m <= best + 1e-12 * abs(best)]
    return max(tied), scores
