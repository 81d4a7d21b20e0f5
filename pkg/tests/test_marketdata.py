import io
import json
import threading
from datetime import date
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import pytest
from hypothesis import given, settings, strategies as st

from residual_flow.errors import InvariantViolation, MalformedRow, NoData, UnsortedInput
from residual_flow.marketdata import (
    BUY, DOWN, FLAT, OPEN_INTEREST, QUOTES, SELL, TRADES, UNCLASSIFIED, UP, OpenInterestSnapshot,
    QuoteTick, RestMarketData, TradeTick, aggregate_bars, bar_from_row, bar_to_row, classify_side,
    format_stream, parse_stream,
)
from residual_flow.marketdata.records import NS_PER_DAY, NS_PER_SECOND, date_to_ns

MIN = 60 * NS_PER_SECOND
DAY1 = date(2024, 3, 1)
T0 = date_to_ns(DAY1)


def trade(ts, price=1.0, size=1, inst="OPT"):
    return TradeTick(ts, inst, price, size)


def quote(ts, bid=0.9, ask=1.1, inst="OPT"):
    return QuoteTick(ts, inst, bid, ask)


# --- parsing ---------------------------------------------------------------

def test_empty_source():
    result = parse_stream(b"", TRADES)
    assert result.records == [] and result.errors == []


def test_single_trade_round_trip():
    rec = parse_stream(b"1700000000000000000,OPT,2.35,7,XCBO\n", TRADES).records
    assert rec == [TradeTick(1700000000000000000, "OPT", 2.35, 7, "XCBO")]


def test_header_skipped_and_venue_optional():
    text = b"ts_ns,instrument_id,price,size,venue\n5,OPT,1.5,2,\n"
    assert parse_stream(text, TRADES).records == [TradeTick(5, "OPT", 1.5, 2, None)]


def test_negative_price_names_line():
    with pytest.raises(InvariantViolation) as exc:
        parse_stream(b"1,OPT,-3.5,1,\n", TRADES)
    assert exc.value.line == 1
    assert "line 1" in str(exc.value)


def test_crossed_quote_rejected():
    with pytest.raises(InvariantViolation):
        parse_stream(b"1,OPT,1.2,1.1\n", QUOTES)


def test_bad_field_count_is_malformed():
    with pytest.raises(MalformedRow) as exc:
        parse_stream(b"ts_ns,instrument_id,bid,ask\n1,OPT,1.0\n", QUOTES)
    assert exc.value.line == 2


def test_non_numeric_size_is_malformed():
    with pytest.raises(MalformedRow):
        parse_stream(b"1,OPT,1.0,abc,\n", TRADES)


def test_lenient_mode_collects_errors():
    text = b"1,OPT,1.0,1,\n2,OPT,-1.0,1,\n3,OPT,1.0\n4,OPT,1.0,2,\n"
    result = parse_stream(text, TRADES, strict=False)
    assert [r.timestamp for r in result.records] == [1, 4]
    assert [e.line for e in result.errors] == [2, 3]


def test_jsonl_matches_csv():
    csv_text = b"3,OPT,1.0,1.5\n4,OPT,1.1,1.2\n"
    jsonl = b'{"ts_ns": 3, "instrument_id": "OPT", "bid": 1.0, "ask": 1.5}\n' \
            b'{"ts_ns": 4, "instrument_id": "OPT", "bid": 1.1, "ask": 1.2}\n'
    assert parse_stream(csv_text, QUOTES).records == parse_stream(jsonl, QUOTES).records


def test_out_of_order_within_buffer_is_sorted():
    text = b"3,OPT,1.0,1,\n1,OPT,1.0,1,\n2,OPT,1.0,1,\n"
    assert [r.timestamp for r in parse_stream(text, TRADES, sort_buffer=5).records] == [1, 2, 3]


def test_out_of_order_beyond_buffer_raises():
    lines = [f"{ts},OPT,1.0,1,\n" for ts in (10, 11, 12, 13, 1)]
    with pytest.raises(UnsortedInput):
        parse_stream("".join(lines).encode(), TRADES, sort_buffer=2)


def test_duplicate_open_interest_rejected():
    with pytest.raises(InvariantViolation):
        parse_stream(b"2024-03-01,OPT,100\n2024-03-01,OPT,120\n", OPEN_INTEREST)


def test_parse_from_path_and_file_object(tmp_path):
    recs = [OpenInterestSnapshot(DAY1, "OPT", 100), OpenInterestSnapshot(date(2024, 3, 2), "OPT", 90)]
    path = tmp_path / "oi.csv"
    path.write_text(format_stream(recs, OPEN_INTEREST))
    assert parse_stream(path, OPEN_INTEREST).records == recs
    assert parse_stream(io.BytesIO(path.read_bytes()), OPEN_INTEREST).records == recs


trade_records = st.lists(
    st.builds(TradeTick, st.integers(0, 10 ** 18), st.sampled_from(["OPT", "UND"]),
              st.floats(1e-4, 1e4, allow_nan=False), st.integers(1, 10 ** 6),
              st.one_of(st.none(), st.sampled_from(["A", "B"]))),
    max_size=30,
).map(lambda rs: sorted(rs, key=lambda r: r.timestamp))


@settings(max_examples=100, deadline=None)
@given(trade_records)
def test_format_parse_round_trip(records):
    assert parse_stream(format_stream(records, TRADES).encode(), TRADES).records == records


# --- side classification ---------------------------------------------------

def test_above_mid_is_buy():
    assert classify_side(trade(10, 10.10), quote(0, 10.00, 10.10), FLAT) == BUY


def test_below_mid_is_sell():
    assert classify_side(trade(10, 10.00), quote(0, 10.00, 10.10), FLAT) == SELL


# Hand-enumerated rule table: position of the price against the mid x last move.
NINE_CASES = [
    ("above", UP, BUY), ("above", DOWN, BUY), ("above", FLAT, BUY),
    ("at", UP, BUY), ("at", DOWN, SELL), ("at", FLAT, UNCLASSIFIED),
    ("below", UP, SELL), ("below", DOWN, SELL), ("below", FLAT, SELL),
]


@pytest.mark.parametrize("position,move,expected", NINE_CASES)
def test_classification_table(position, move, expected):
    price = {"above": 10.08, "at": 10.05, "below": 10.02}[position]
    assert classify_side(trade(5, price), quote(0, 10.00, 10.10), move) == expected


def test_stale_or_missing_quote_unclassified():
    q = quote(0, 10.00, 10.10)
    assert classify_side(trade(61 * NS_PER_SECOND, 10.10), q, UP) == UNCLASSIFIED
    assert classify_side(trade(60 * NS_PER_SECOND, 10.10), q, UP) == BUY
    assert classify_side(trade(5 * NS_PER_SECOND, 10.10), q, UP, max_staleness_ns=NS_PER_SECOND) == UNCLASSIFIED
    assert classify_side(trade(5, 10.10), None, UP) == UNCLASSIFIED


def test_future_quote_rejected():
    with pytest.raises(ValueError):
        classify_side(trade(5, 10.0), quote(6), FLAT)


# --- aggregation -------------------------------------------------------------

def test_volume_adds_within_bar():
    bars = aggregate_bars([trade(T0 + 1, size=3), trade(T0 + 2, size=4)], [], [], option_id="OPT")
    assert len(bars) == 1 and bars[0].option_volume == 7


def test_open_interest_forward_filled():
    day2 = T0 + NS_PER_DAY
    trades = [trade(day2 + k * MIN + 5, size=1) for k in range(5)]
    bars = aggregate_bars(trades, [], [OpenInterestSnapshot(DAY1, "OPT", 100)], option_id="OPT")
    assert [b.open_interest for b in bars] == [100] * 5


def test_open_interest_changes_only_at_snapshots():
    trades = [trade(T0 + k * 6 * 3600 * NS_PER_SECOND + 1) for k in range(8)]
    snaps = [OpenInterestSnapshot(DAY1, "OPT", 100), OpenInterestSnapshot(date(2024, 3, 2), "OPT", 130)]
    assert [b.open_interest for b in aggregate_bars(trades, [], snaps, option_id="OPT")] == [100] * 4 + [130] * 4


def test_empty_intervals_omitted():
    bars = aggregate_bars([trade(T0 + MIN + 1), trade(T0 + 3 * MIN + 1)], [], [], option_id="OPT")
    assert [b.bar_start for b in bars] == [T0 + MIN, T0 + 3 * MIN]


def test_all_empty_is_no_data():
    with pytest.raises(NoData):
        aggregate_bars([], [], [], option_id="OPT")


def test_signed_volume_and_counts():
    quotes = [quote(T0, 1.0, 1.2)]
    trades = [trade(T0 + 1, 1.2, 5), trade(T0 + 2, 1.0, 2), trade(T0 + 3, 1.1, 4)]
    (bar,) = aggregate_bars(trades, quotes, [], option_id="OPT")
    # the third trade sits at the mid after a down-tick
    assert (bar.n_buys, bar.n_sells, bar.n_unclassified) == (1, 2, 0)
    assert bar.signed_option_volume == 5 - 2 - 4
    assert bar.option_volume == 11


def test_sigma_forward_fill_limit():
    quotes = [quote(T0 + 1)]
    trades = [trade(T0 + k * MIN + 2) for k in range(8)]
    bars = aggregate_bars(trades, quotes, [], lambda *_: 0.3, option_id="OPT")
    assert [b.implied_vol for b in bars] == [0.3] * 6 + [None] * 2


def test_underlying_return_between_bars():
    quotes = [quote(T0, 99.9, 100.1, "UND"), quote(T0 + 1), quote(T0 + MIN, 109.9, 110.1, "UND")]
    trades = [trade(T0 + 2), trade(T0 + MIN + 2)]
    bars = aggregate_bars(trades, quotes, [], option_id="OPT", underlying_id="UND")
    assert bars[0].underlying_log_return == 0.0
    assert bars[1].underlying_log_return == pytest.approx(0.09531017980432493, abs=1e-15)


def _random_streams(seed):
    import random

    rnd = random.Random(seed)
    quotes, trades = [], []
    ts = T0
    for _ in range(400):
        ts += rnd.randrange(1, 40 * NS_PER_SECOND)
        if rnd.random() < 0.4:
            bid = round(rnd.uniform(0.8, 1.2), 2)
            quotes.append(quote(ts, bid, bid + 0.02))
        else:
            trades.append(trade(ts, round(rnd.uniform(0.8, 1.25), 2), rnd.randrange(1, 50),
                                inst=rnd.choice(["OPT", "OPT", "UND"])))
    return trades, quotes


@pytest.mark.parametrize("seed", range(5))
def test_volume_conservation(seed):
    trades, quotes = _random_streams(seed)
    bars = aggregate_bars(trades, quotes, [], option_id="OPT", underlying_id="UND")
    assert sum(b.option_volume for b in bars) == sum(t.size for t in trades if t.instrument_id == "OPT")
    assert sum(b.n_trades for b in bars) == sum(1 for t in trades if t.instrument_id == "OPT")
    for b in bars:
        assert b.option_volume >= abs(b.signed_option_volume)


def test_aggregation_deterministic():
    trades, quotes = _random_streams(9)
    a = [bar_to_row(b) for b in aggregate_bars(trades, quotes, [], option_id="OPT", underlying_id="UND")]
    b = [bar_to_row(b) for b in aggregate_bars(trades, quotes, [], option_id="OPT", underlying_id="UND")]
    assert a == b
    assert [bar_to_row(bar_from_row(r)) for r in a] == a


# --- REST adapter ------------------------------------------------------------

class _FeedHandler(BaseHTTPRequestHandler):
    pages = {}
    seen = []

    def do_GET(self):
        url = urlparse(self.path)
        type(self).seen.append((url.path, parse_qs(url.query), self.headers.get("X-Api-Key")))
        cursor = parse_qs(url.query).get("cursor", ["0"])[0]
        key = (url.path, cursor)
        if key not in self.pages:
            self.send_response(404)
            self.end_headers()
            return
        results, nxt = self.pages[key]
        body = {"results": results,
                "next_url": f"http://{self.headers['Host']}{url.path}?cursor={nxt}" if nxt else None}
        data = json.dumps(body).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def feed():
    _FeedHandler.seen = []
    _FeedHandler.pages = {
        ("/v3/trades/OPT", "0"): ([{"ts_ns": 1, "price": 1.5, "size": 2}], "p2"),
        ("/v3/trades/OPT", "p2"): ([{"ts_ns": 2, "price": 1.6, "size": 3, "venue": "X"}], None),
        ("/v3/quotes/OPT", "0"): ([{"ts_ns": 1, "bid": 1.4, "ask": 1.6}], None),
    }
    server = ThreadingHTTPServer(("127.0.0.1", 0), _FeedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()


def test_rest_follows_pages_and_sends_auth(feed):
    client = RestMarketData(feed, "secret", auth_header="X-Api-Key", auth_scheme=None)
    trades = client.trades("OPT", 0, 10)
    assert trades == [TradeTick(1, "OPT", 1.5, 2), TradeTick(2, "OPT", 1.6, 3, "X")]
    first, second = _FeedHandler.seen
    assert first[1] == {"from": ["0"], "to": ["10"]}
    assert second[1] == {"cursor": ["p2"]}
    assert first[2] == second[2] == "secret"


def test_rest_quotes(feed):
    assert RestMarketData(feed).quotes("OPT", 0, 10) == [QuoteTick(1, "OPT", 1.4, 1.6)]
    assert _FeedHandler.seen[0][2] is None


def test_rest_bad_record_surfaces_as_data_error(feed):
    _FeedHandler.pages[("/v3/quotes/OPT", "0")] = ([{"ts_ns": 1, "bid": 1.7, "ask": 1.6}], None)
    with pytest.raises(InvariantViolation):
        RestMarketData(feed).quotes("OPT", 0, 10)
