"""Walk-forward evaluation with no lookahead.

Fold ``k`` trains on rows ``[k*step, k*step + train_len)`` and tests on the
following ``test_len`` rows, the last fold's test slice being truncated at
the end of the data. Penalty selection for ridge/lasso runs inside the
fold's training rows only.
"""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.stats import rankdata

from .calibrate.features import COLUMNS, FeatureMatrix
from .calibrate.model import DEFAULT_GRID, METHODS, fit, select_penalty
from .errors import ConfigError, Empty, LengthMismatch, TooFewRows

METRICS = ("mse", "mae", "directional_accuracy", "spearman_ic")


@dataclass(frozen=True)
class SplitPlan:
    train_len: int = 500
    test_len: int = 50
    step: int = 50

    def __post_init__(self):
        for name in ("train_len", "test_len", "step"):
            if not int(getattr(self, name)) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.step > self.test_len:
            raise ConfigError("step must not exceed test_len (rows would go unevaluated)")


@dataclass(frozen=True)
class ModelConfig:
    method: str = "ols"
    penalty: float = 0.0
    grid: Optional[Tuple[float, ...]] = DEFAULT_GRID
    inner_folds: int = 2
    exclude_features: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        bad = set(self.exclude_features) - set(COLUMNS)
        if bad:
            raise ConfigError(f"unknown feature(s) to exclude: {sorted(bad)}")
        if self.grid is not None and not self.grid:
            raise ConfigError("penalty grid must be non-empty")


@dataclass(frozen=True)
class Fold:
    index: int
    train: range
    test: range


def plan_splits(n_rows, plan: SplitPlan = SplitPlan()) -> List[Fold]:
    folds = []
    k = 0
    while k * plan.step + plan.train_len < n_rows:
        start = k * plan.step
        test_start = start + plan.train_len
        folds.append(Fold(k, range(start, test_start), range(test_start, min(test_start + plan.test_len, n_rows))))
        k += 1
    if not folds:
        raise TooFewRows(f"{n_rows} rows leave no test rows after train_len={plan.train_len}")
    return folds


def spearman(a, b) -> float:
    """Spearman rank correlation with average ranks for ties; NaN if either side is constant."""
    ra = rankdata(a)
    rb = rankdata(b)
    ra = ra - ra.mean()
    rb = rb - rb.mean()
    denom = math.sqrt(math.fsum(ra * ra) * math.fsum(rb * rb))
    if denom == 0.0:
        return math.nan
    return math.fsum(ra * rb) / denom


def score(predictions, actuals) -> dict:
    p = np.asarray(predictions, dtype=float).ravel()
    a = np.asarray(actuals, dtype=float).ravel()
    if p.shape != a.shape:
        raise LengthMismatch(f"{p.size} predictions vs {a.size} actuals")
    if p.size == 0:
        raise Empty("nothing to score")
    err = p - a
    n = p.size
    return {
        "mse": math.fsum(err * err) / n,
        "mae": math.fsum(np.abs(err)) / n,
        "directional_accuracy": float(np.count_nonzero(np.sign(p) == np.sign(a))) / n,
        "spearman_ic": spearman(p, a),
    }


@dataclass
class FoldResult:
    fold: int
    train_rows: Tuple[int, int]
    test_rows: Tuple[int, int]
    test_first_ns: int
    test_last_ns: int
    penalty: float
    mse: float
    mae: float
    directional_accuracy: float
    spearman_ic: Optional[float]


def _finite_or_none(x):
    return None if x is None or not math.isfinite(x) else x


def aggregate(folds: List[FoldResult]) -> dict:
    """Population mean/std of each metric over folds; undefined ICs are skipped."""
    out = {}
    for name in METRICS:
        vals = [getattr(f, name) for f in folds]
        vals = [v for v in vals if v is not None and math.isfinite(v)]
        if not vals:
            out[name] = {"mean": None, "std": None}
            continue
        mean = math.fsum(vals) / len(vals)
        std = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / len(vals))
        out[name] = {"mean": mean, "std": std}
    return out


@dataclass
class BacktestReport:
    folds: List[FoldResult]
    aggregate: dict
    config: dict
    input_digest: str
    seed: Optional[int] = None
    n_rows: int = 0

    def to_dict(self):
        return {
            "folds": [asdict(f) for f in self.folds],
            "aggregate": self.aggregate,
            "config": self.config,
            "input_digest": self.input_digest,
            "n_rows": self.n_rows,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["fold", "train_start", "train_end", "test_start", "test_end", "test_first_ns",
                         "test_last_ns", "penalty", *METRICS])
        for f in self.folds:
            writer.writerow([f.fold, *f.train_rows, *f.test_rows, f.test_first_ns, f.test_last_ns,
                             repr(f.penalty), repr(f.mse), repr(f.mae), repr(f.directional_accuracy),
                             "" if f.spearman_ic is None else repr(f.spearman_ic)])
        return buf.getvalue()

    def summary(self) -> str:
        def fmt(name):
            v = self.aggregate[name]["mean"]
            return "nan" if v is None else f"{v:.6g}"

        return (f"folds={len(self.folds)} mse={fmt('mse')} dir_acc={fmt('directional_accuracy')} "
                f"ic={fmt('spearman_ic')}")


def run_fold(fm: FeatureMatrix, fold: Fold, config: ModelConfig) -> FoldResult:
    """Everything here reads only rows before ``fold.test.stop``."""
    train = slice(fold.train.start, fold.train.stop)
    test = fm[fold.test.start:fold.test.stop]
    penalty = config.penalty
    if config.method != "ols" and config.grid is not None:
        penalty, _ = select_penalty(fm, config.method, config.grid, config.inner_folds,
                                    train_slice=train, exclude=config.exclude_features)
    model = fit(fm, train, method=config.method, penalty=penalty, exclude=config.exclude_features)
    metrics = score(model.predict_many(test.X), test.y)
    return FoldResult(
        fold=fold.index, train_rows=(fold.train.start, fold.train.stop),
        test_rows=(fold.test.start, fold.test.stop), test_first_ns=int(test.bar_start[0]),
        test_last_ns=int(test.bar_start[-1]), penalty=float(model.penalty), mse=metrics["mse"],
        mae=metrics["mae"], directional_accuracy=metrics["directional_accuracy"],
        spearman_ic=_finite_or_none(metrics["spearman_ic"]),
    )


def run_backtest(fm: FeatureMatrix, config: ModelConfig = ModelConfig(), plan: SplitPlan = SplitPlan(),
                 seed=None) -> BacktestReport:
    folds = [run_fold(fm, fold, config) for fold in plan_splits(len(fm), plan)]
    echo = {
        "model": {**asdict(config), "grid": None if config.grid is None else list(config.grid),
                  "exclude_features": list(config.exclude_features)},
        "split": asdict(plan),
    }
    return BacktestReport(folds, aggregate(folds), echo, fm.digest(), seed, len(fm))
