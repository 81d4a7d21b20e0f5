"""Immutable market-data records and their invariants."""

from dataclasses import dataclass
from datetime import date
import math
from typing import Optional

from ..errors import InvariantViolation
from ..impliedvol import CALL, PUT

NS_PER_SECOND = 1_000_000_000
NS_PER_DAY = 86_400 * NS_PER_SECOND
SECONDS_PER_YEAR = 365.25 * 86_400


def _require(cond, message, line=None):
    if not cond:
        raise InvariantViolation(line, message)


def utc_date_of(ts_ns: int) -> date:
    return date.fromordinal(date(1970, 1, 1).toordinal() + ts_ns // NS_PER_DAY)


def date_to_ns(d: date) -> int:
    return (d.toordinal() - date(1970, 1, 1).toordinal()) * NS_PER_DAY


@dataclass(frozen=True)
class TradeTick:
    timestamp: int
    instrument_id: str
    price: float
    size: int
    venue: Optional[str] = None

    def __post_init__(self):
        _require(math.isfinite(self.price) and self.price > 0, f"trade price must be > 0, got {self.price!r}")
        _require(self.size > 0, f"trade size must be > 0, got {self.size!r}")


@dataclass(frozen=True)
class QuoteTick:
    timestamp: int
    instrument_id: str
    bid: float
    ask: float

    def __post_init__(self):
        _require(math.isfinite(self.bid) and math.isfinite(self.ask), "quote must be finite")
        _require(0 < self.bid <= self.ask, f"need 0 < bid <= ask, got bid={self.bid!r} ask={self.ask!r}")

    @property
    def mid(self) -> float:
        return (self.bid + self.ask) / 2.0


@dataclass(frozen=True)
class OpenInterestSnapshot:
    as_of: date
    instrument_id: str
    open_interest: int

    def __post_init__(self):
        _require(self.open_interest >= 0, f"open interest must be >= 0, got {self.open_interest!r}")

    @property
    def timestamp(self) -> int:
        return date_to_ns(self.as_of)


@dataclass(frozen=True)
class OptionContract:
    """A European option on ``underlying_id``.

    Expiry is taken as 00:00 UTC of ``expiry``; ``instrument_id`` is the
    option's id in the tick streams.
    """

    instrument_id: str
    underlying_id: str
    strike: float
    expiry: date
    right: str = CALL
    rate: float = 0.0

    def __post_init__(self):
        _require(self.strike > 0, f"strike must be > 0, got {self.strike!r}")
        _require(self.right in (CALL, PUT), f"right must be call/put, got {self.right!r}")

    @property
    def expiry_ns(self) -> int:
        return date_to_ns(self.expiry)

    def years_to_expiry(self, ts_ns: int) -> float:
        return (self.expiry_ns - ts_ns) / NS_PER_SECOND / SECONDS_PER_YEAR

    def to_dict(self):
        return {
            "instrument_id": self.instrument_id,
            "underlying_id": self.underlying_id,
            "strike": self.strike,
            "expiry": self.expiry.isoformat(),
            "right": self.right,
            "rate": self.rate,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            instrument_id=str(d["instrument_id"]),
            underlying_id=str(d["underlying_id"]),
            strike=float(d["strike"]),
            expiry=date.fromisoformat(d["expiry"]),
            right=d.get("right", CALL),
            rate=float(d.get("rate", 0.0)),
        )


@dataclass(frozen=True)
class MarketBar:
    """One interval of aggregated option activity.

    ``option_volume`` counts every option trade (buys + sells + unclassified);
    ``signed_option_volume`` is buy size minus sell size. ``implied_vol`` is
    ``None`` when no quote could be inverted within the forward-fill limit.
    """

    bar_start: int
    interval: int
    option_volume: int
    signed_option_volume: int
    open_interest: int
    implied_vol: Optional[float]
    option_mid: Optional[float]
    underlying_mid: Optional[float]
    underlying_log_return: float
    underlying_volume: int = 0
    n_buys: int = 0
    n_sells: int = 0
    n_unclassified: int = 0

    @property
    def n_trades(self) -> int:
        return self.n_buys + self.n_sells + self.n_unclassified


BAR_FIELDS = (
    "bar_start_ns", "interval_ns", "option_volume", "signed_option_volume", "open_interest",
    "implied_vol", "option_mid", "underlying_mid", "underlying_log_return", "underlying_volume",
    "n_buys", "n_sells", "n_unclassified",
)


def bar_to_row(bar: MarketBar):
    def f(x):
        return "" if x is None else repr(float(x))

    return [
        str(bar.bar_start), str(bar.interval), str(bar.option_volume), str(bar.signed_option_volume),
        str(bar.open_interest), f(bar.implied_vol), f(bar.option_mid), f(bar.underlying_mid),
        repr(float(bar.underlying_log_return)), str(bar.underlying_volume),
        str(bar.n_buys), str(bar.n_sells), str(bar.n_unclassified),
    ]


def bar_from_row(row) -> MarketBar:
    def f(x):
        return None if x == "" else float(x)

    return MarketBar(
        bar_start=int(row[0]), interval=int(row[1]), option_volume=int(row[2]),
        signed_option_volume=int(row[3]), open_interest=int(row[4]), implied_vol=f(row[5]),
        option_mid=f(row[6]), underlying_mid=f(row[7]), underlying_log_return=float(row[8]),
        underlying_volume=int(row[9]), n_buys=int(row[10]), n_sells=int(row[11]),
        n_unclassified=int(row[12]),
    )

