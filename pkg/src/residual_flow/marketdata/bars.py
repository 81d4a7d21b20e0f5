"""Trade signing and time-bar aggregation."""

import logging
import math
from typing import Callable, Optional, Sequence

from ..errors import NoData, PricingError
from ..impliedvol import implied_vol
from .records import (
    NS_PER_SECOND, MarketBar, OpenInterestSnapshot, OptionContract, QuoteTick, TradeTick,
)

logger = logging.getLogger(__name__)

BUY, SELL, UNCLASSIFIED = "buy", "sell", "unclassified"
UP, DOWN, FLAT = "up", "down", "flat"

DEFAULT_INTERVAL_NS = 60 * NS_PER_SECOND
DEFAULT_STALENESS_NS = 60 * NS_PER_SECOND
MAX_SIGMA_FILL = 5


def classify_side(trade: TradeTick, prevailing_quote: Optional[QuoteTick], last_price_move: str,
                  *, max_staleness_ns: int = DEFAULT_STALENESS_NS) -> str:
    """Quote-midpoint rule with a tick-test fallback at the midpoint.

    A missing quote, or one older than ``max_staleness_ns``, leaves the trade
    unclassified.
    """
    if prevailing_quote is None:
        return UNCLASSIFIED
    if prevailing_quote.timestamp > trade.timestamp:
        raise ValueError("prevailing quote is newer than the trade")
    if trade.timestamp - prevailing_quote.timestamp > max_staleness_ns:
        return UNCLASSIFIED
    mid = prevailing_quote.mid
    if trade.price > mid:
        return BUY
    if trade.price < mid:
        return SELL
    return {UP: BUY, DOWN: SELL}.get(last_price_move, UNCLASSIFIED)


class ContractIV:
    """Implied-vol provider for one contract: ``(option_mid, underlying_mid, ts_ns) -> vol | None``."""

    def __init__(self, contract: OptionContract):
        self.contract = contract

    def __call__(self, option_mid, underlying_mid, ts_ns):
        c = self.contract
        expiry = c.years_to_expiry(ts_ns)
        if option_mid is None or underlying_mid is None or expiry <= 0:
            return None
        try:
            return implied_vol(option_mid, underlying_mid, c.strike, c.rate, expiry, c.right)
        except PricingError as exc:
            logger.debug("no implied vol at %d: %s", ts_ns, exc)
            return None


class _OpenBar:
    __slots__ = ("index", "volume", "buys", "sells", "n_buys", "n_sells", "n_unclassified",
                 "underlying_volume", "last_quote")

    def __init__(self, index):
        self.index = index
        self.volume = self.buys = self.sells = 0
        self.n_buys = self.n_sells = self.n_unclassified = 0
        self.underlying_volume = 0
        # (option mid, underlying mid, ts) of the last option quote inside the bar
        self.last_quote = None


_QUOTE, _TRADE = 0, 1


def aggregate_bars(trades: Sequence[TradeTick], quotes: Sequence[QuoteTick],
                   oi_snapshots: Sequence[OpenInterestSnapshot],
                   iv_provider: Optional[Callable] = None,
                   interval: int = DEFAULT_INTERVAL_NS, *,
                   option_id: str, underlying_id: Optional[str] = None,
                   max_staleness_ns: int = DEFAULT_STALENESS_NS,
                   max_sigma_fill: int = MAX_SIGMA_FILL):
    """Aggregate option/underlying ticks into fixed ``interval`` (ns) bars.

    Only intervals holding at least one ``option_id`` trade or quote produce a
    bar. Quotes sort before trades at equal timestamps, so a quote stamped
    with the trade's own time counts as prevailing. Underlying ticks outside
    emitted bars update the prevailing underlying mid but their volume is not
    reported.
    """
    if interval <= 0:
        raise ValueError("interval must be > 0")
    if not trades and not quotes and not oi_snapshots:
        raise NoData("no trades, quotes or open interest supplied")

    # at equal timestamps: underlying quote, option quote, underlying trade, option trade
    events = []
    for seq, q in enumerate(quotes):
        if q.instrument_id in (option_id, underlying_id):
            events.append((q.timestamp, 2 * _QUOTE + (q.instrument_id == option_id), seq, q))
    for seq, t in enumerate(trades):
        if t.instrument_id in (option_id, underlying_id):
            events.append((t.timestamp, 2 * _TRADE + (t.instrument_id == option_id), seq, t))
    events.sort(key=lambda e: e[:3])
    if not any(e[3].instrument_id == option_id for e in events):
        raise NoData(f"no trades or quotes for option {option_id!r}")

    snaps = sorted((s for s in oi_snapshots if s.instrument_id == option_id), key=lambda s: s.as_of)
    snap_pos, open_interest = 0, 0

    option_quote = None
    underlying_mid, underlying_quoted = None, False
    under_vol_index, under_vol = None, 0
    last_trade_price, last_move = None, FLAT
    last_sigma, bars_since_sigma = None, 0
    prev_underlying = None
    bars = []
    current = None

    def close(bar):
        nonlocal snap_pos, open_interest, last_sigma, bars_since_sigma, prev_underlying
        start = bar.index * interval
        while snap_pos < len(snaps) and snaps[snap_pos].timestamp <= start:
            open_interest = snaps[snap_pos].open_interest
            snap_pos += 1
        sigma = None
        if bar.last_quote is not None and iv_provider is not None:
            sigma = iv_provider(*bar.last_quote)
        if sigma is not None and math.isfinite(sigma):
            last_sigma, bars_since_sigma = sigma, 0
        else:
            sigma = None
            bars_since_sigma += 1
            if last_sigma is not None and bars_since_sigma <= max_sigma_fill:
                sigma = last_sigma
        log_ret = 0.0
        if prev_underlying is not None and underlying_mid is not None:
            log_ret = math.log(underlying_mid / prev_underlying)
        if underlying_mid is not None:
            prev_underlying = underlying_mid
        bars.append(MarketBar(
            bar_start=start, interval=interval, option_volume=bar.volume,
            signed_option_volume=bar.buys - bar.sells, open_interest=open_interest,
            implied_vol=sigma, option_mid=option_quote.mid if option_quote else None,
            underlying_mid=underlying_mid, underlying_log_return=log_ret,
            underlying_volume=bar.underlying_volume, n_buys=bar.n_buys, n_sells=bar.n_sells,
            n_unclassified=bar.n_unclassified,
        ))

    for ts, priority, _, rec in events:
        is_option = priority % 2 == 1
        index = ts // interval
        if current is not None and index != current.index:
            close(current)
            current = None
        if is_option and current is None:
            current = _OpenBar(index)
            if under_vol_index == index:
                current.underlying_volume = under_vol

        if priority // 2 == _QUOTE:
            if is_option:
                option_quote = rec
                current.last_quote = (rec.mid, underlying_mid, ts)
            else:
                underlying_mid, underlying_quoted = rec.mid, True
            continue

        if not is_option:
            if under_vol_index != index:
                under_vol_index, under_vol = index, 0
            under_vol += rec.size
            if current is not None:
                current.underlying_volume = under_vol
            # trades stand in for the underlying mid until a quote arrives
            if not underlying_quoted:
                underlying_mid = rec.price
            continue

        side = classify_side(rec, option_quote, last_move, max_staleness_ns=max_staleness_ns)
        current.volume += rec.size
        if side == BUY:
            current.buys += rec.size
            current.n_buys += 1
        elif side == SELL:
            current.sells += rec.size
            current.n_sells += 1
        else:
            current.n_unclassified += 1
        if last_trade_price is not None and rec.price != last_trade_price:
            last_move = UP if rec.price > last_trade_price else DOWN
        last_trade_price = rec.price

    if current is not None:
        close(current)
    return bars
