"""Aligned feature matrix: bar-t features against the bar-(t+1) option move."""

import csv
import hashlib
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ConfigError, DataError, EmptyMatrix

COLUMNS = ("V", "OI", "sigma", "delta_r")
VOLUME_SOURCES = ("option", "underlying")
TARGETS = ("log_return", "price_change")


@dataclass(frozen=True)
class FeatureRow:
    bar_start: int
    V: float
    OI: float
    sigma: float
    delta_r: float
    target: float = math.nan

    def features(self):
        return (self.V, self.OI, self.sigma, self.delta_r)


class FeatureMatrix:
    """Rows strictly increasing in ``bar_start``; columns fixed to ``COLUMNS``."""

    columns = COLUMNS

    def __init__(self, bar_start, X, y):
        self.bar_start = np.asarray(bar_start, dtype=np.int64)
        self.X = np.asarray(X, dtype=float).reshape(-1, len(COLUMNS))
        self.y = np.asarray(y, dtype=float)
        n = len(self.bar_start)
        if self.X.shape[0] != n or self.y.shape != (n,):
            raise ValueError("bar_start, X and y lengths differ")
        if n > 1 and not np.all(np.diff(self.bar_start) > 0):
            raise DataError("feature rows must be strictly increasing in bar_start")
        if not (np.isfinite(self.X).all() and np.isfinite(self.y).all()):
            raise DataError("feature matrix contains non-finite values")

    @classmethod
    def from_rows(cls, rows: Sequence[FeatureRow]):
        return cls([r.bar_start for r in rows], [r.features() for r in rows], [r.target for r in rows])

    def __len__(self):
        return len(self.y)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return FeatureMatrix(self.bar_start[index], self.X[index], self.y[index])
        idx = np.asarray(index)
        return FeatureMatrix(self.bar_start[idx], self.X[idx], self.y[idx])

    @property
    def rows(self):
        return [FeatureRow(int(t), *map(float, x), float(y))
                for t, x, y in zip(self.bar_start, self.X, self.y)]

    def to_csv(self) -> str:
        """Canonical serialization; floats in shortest round-trip form."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("bar_start_ns",) + COLUMNS + ("target",))
        for t, x, y in zip(self.bar_start, self.X, self.y):
            writer.writerow([int(t)] + [repr(float(v)) for v in x] + [repr(float(y))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str):
        rows = [r for r in csv.reader(io.StringIO(text))][1:]
        rows = [r for r in rows if r]
        return cls([int(r[0]) for r in rows], [[float(v) for v in r[1:5]] for r in rows],
                   [float(r[5]) for r in rows])

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode("utf-8")).hexdigest()


def build_features(bars, residuals, *, volume_source="option", target="log_return") -> FeatureMatrix:
    """One row per bar with a residual point, a finite implied vol and a successor bar.

    ``target="log_return"`` uses ``ln(mid[t+1] / mid[t])`` of the option mid;
    ``"price_change"`` uses ``mid[t+1] - mid[t]``.
    """
    if volume_source not in VOLUME_SOURCES:
        raise ConfigError(f"volume_source must be one of {VOLUME_SOURCES}, got {volume_source!r}")
    if target not in TARGETS:
        raise ConfigError(f"target must be one of {TARGETS}, got {target!r}")
    by_start = {p.bar_start: p for p in residuals}
    starts = {b.bar_start for b in bars}
    if not by_start.keys() <= starts:
        raise DataError("residuals reference bars not present in the bar series")

    rows = []
    for bar, nxt in zip(bars[:-1], bars[1:]):
        point = by_start.get(bar.bar_start)
        if point is None or bar.implied_vol is None or not math.isfinite(bar.implied_vol):
            continue
        if not bar.option_mid or not nxt.option_mid:
            continue
        if target == "log_return":
            move = math.log(nxt.option_mid / bar.option_mid)
        else:
            move = nxt.option_mid - bar.option_mid
        volume = bar.option_volume if volume_source == "option" else bar.underlying_volume
        rows.append(FeatureRow(bar.bar_start, float(volume), float(bar.open_interest),
                               float(bar.implied_vol), float(point.delta_r), move))
    if not rows:
        raise EmptyMatrix("no bar qualifies for a feature row")
    return FeatureMatrix.from_rows(rows)
