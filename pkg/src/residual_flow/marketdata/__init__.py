from .bars import (
    BUY, DOWN, FLAT, SELL, UNCLASSIFIED, UP, ContractIV, aggregate_bars, classify_side,
)
from .parsing import OPEN_INTEREST, QUOTES, TRADES, ParseResult, format_stream, parse_stream, write_stream
from .records import (
    BAR_FIELDS, MarketBar, OpenInterestSnapshot, OptionContract, QuoteTick, TradeTick,
    bar_from_row, bar_to_row,
)
from .rest import RestMarketData

__all__ = [
    "BUY", "SELL", "UNCLASSIFIED", "UP", "DOWN", "FLAT",
    "ContractIV", "aggregate_bars", "classify_side",
    "TRADES", "QUOTES", "OPEN_INTEREST", "ParseResult", "parse_stream", "format_stream", "write_stream",
    "BAR_FIELDS", "MarketBar", "OpenInterestSnapshot", "OptionContract", "QuoteTick", "TradeTick",
    "bar_from_row", "bar_to_row", "RestMarketData",
]
