"""CSV / JSON-lines readers and writers for trade, quote and open-interest streams."""

import csv
import heapq
import io
import json
import os
from datetime import date
from typing import Iterable, List, NamedTuple

from ..errors import InvariantViolation, MalformedRow, UnsortedInput
from .records import OpenInterestSnapshot, QuoteTick, TradeTick

TRADES = "trades"
QUOTES = "quotes"
OPEN_INTEREST = "open_interest"

COLUMNS = {
    TRADES: ("ts_ns", "instrument_id", "price", "size", "venue"),
    QUOTES: ("ts_ns", "instrument_id", "bid", "ask"),
    OPEN_INTEREST: ("date", "instrument_id", "open_interest"),
}

DEFAULT_SORT_BUFFER = 10_000


class ParseResult(NamedTuple):
    records: list
    errors: List[MalformedRow]


def _int(value, name):
    if isinstance(value, bool):
        raise ValueError(f"{name} must be an integer")
    if isinstance(value, int):
        return value
    if isinstance(value, str) and value.strip().lstrip("+-").isdigit():
        return int(value)
    raise ValueError(f"{name} must be an integer, got {value!r}")


def _float(value, name):
    if isinstance(value, bool) or value is None or value == "":
        raise ValueError(f"{name} must be a number, got {value!r}")
    return float(value)


def _build(schema, fields):
    if schema == TRADES:
        venue = fields.get("venue")
        return TradeTick(
            timestamp=_int(fields["ts_ns"], "ts_ns"),
            instrument_id=str(fields["instrument_id"]),
            price=_float(fields["price"], "price"),
            size=_int(fields["size"], "size"),
            venue=venue if venue not in ("", None) else None,
        )
    if schema == QUOTES:
        return QuoteTick(
            timestamp=_int(fields["ts_ns"], "ts_ns"),
            instrument_id=str(fields["instrument_id"]),
            bid=_float(fields["bid"], "bid"),
            ask=_float(fields["ask"], "ask"),
        )
    return OpenInterestSnapshot(
        as_of=date.fromisoformat(str(fields["date"])),
        instrument_id=str(fields["instrument_id"]),
        open_interest=_int(fields["open_interest"], "open_interest"),
    )


def _open_text(source):
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8")), False
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8", newline=""), True
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def _rows(text, schema, fmt):
    """Yield (line_number, dict | exception) for every non-blank data line."""
    columns = COLUMNS[schema]
    for lineno, line in enumerate(text, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        kind = fmt or ("jsonl" if stripped.startswith("{") else "csv")
        if kind == "jsonl":
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                yield lineno, MalformedRow(lineno, f"invalid JSON: {exc.msg}")
                continue
            if not isinstance(obj, dict):
                yield lineno, MalformedRow(lineno, "JSON line is not an object")
                continue
            missing = [c for c in columns if c not in obj and c != "venue"]
            if missing:
                yield lineno, MalformedRow(lineno, f"missing fields {missing}")
                continue
            yield lineno, obj
        else:
            values = next(csv.reader([stripped]))
            if tuple(v.strip() for v in values) == columns:
                continue
            if len(values) != len(columns):
                yield lineno, MalformedRow(
                    lineno, f"expected {len(columns)} fields {list(columns)}, got {len(values)}"
                )
                continue
            yield lineno, dict(zip(columns, (v.strip() for v in values)))


def parse_stream(source, schema, *, fmt=None, strict=True, sort_buffer=DEFAULT_SORT_BUFFER):
    """Parse one stream into validated records in timestamp order.

    ``source`` may be bytes, a path, or a binary/text file object; ``fmt`` is
    ``"csv"``, ``"jsonl"`` or ``None`` (sniffed per line). A header row
    matching the column names exactly is skipped. Out-of-order rows are
    reordered through a ``sort_buffer``-deep buffer; a row older than one
    already released raises :class:`UnsortedInput`.

    With ``strict=True`` the first bad row raises (:class:`MalformedRow` or
    :class:`InvariantViolation`, carrying the line number); otherwise bad
    rows are skipped and collected in ``ParseResult.errors``.
    """
    if schema not in COLUMNS:
        raise ValueError(f"unknown schema {schema!r}")
    text, owned = _open_text(source)
    records, errors = [], []
    heap, seq, released = [], 0, None
    seen_oi = set()
    try:
        for lineno, item in _rows(text, schema, fmt):
            if not isinstance(item, Exception):
                try:
                    item = _build(schema, item)
                except InvariantViolation as exc:
                    item = InvariantViolation(lineno, exc.reason)
                except (ValueError, TypeError, KeyError) as exc:
                    item = MalformedRow(lineno, str(exc))
            if not isinstance(item, Exception) and schema == OPEN_INTEREST:
                key = (item.instrument_id, item.as_of)
                if key in seen_oi:
                    item = InvariantViolation(lineno, f"duplicate open interest for {key[0]} on {key[1]}")
                else:
                    seen_oi.add(key)
            if isinstance(item, Exception):
                if strict:
                    raise item
                errors.append(item)
                continue
            ts = item.timestamp
            if released is not None and ts < released:
                raise UnsortedInput(
                    f"line {lineno}: timestamp {ts} precedes already-emitted {released} "
                    f"(sort buffer {sort_buffer} exceeded)"
                )
            heapq.heappush(heap, (ts, seq, item))
            seq += 1
            if len(heap) > sort_buffer:
                released, _, rec = heapq.heappop(heap)
                records.append(rec)
        while heap:
            _, _, rec = heapq.heappop(heap)
            records.append(rec)
    finally:
        if owned:
            text.close()
    return ParseResult(records, errors)


def _record_row(schema, rec):
    if schema == TRADES:
        return [str(rec.timestamp), rec.instrument_id, repr(rec.price), str(rec.size), rec.venue or ""]
    if schema == QUOTES:
        return [str(rec.timestamp), rec.instrument_id, repr(rec.bid), repr(rec.ask)]
    return [rec.as_of.isoformat(), rec.instrument_id, str(rec.open_interest)]


def format_stream(records: Iterable, schema) -> str:
    """Serialize records as CSV with a header; floats use shortest round-trip repr."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS[schema])
    for rec in records:
        writer.writerow(_record_row(schema, rec))
    return buf.getvalue()


def write_stream(records: Iterable, schema, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_stream(records, schema))
