"""Trade record parsing, validation and canonical serialisation.

Input is pre-extracted trade data, either CSV with the exact header
``CSV_HEADER`` or JSONL objects using the same field names.  Money is held
as integer micro-USD throughout the package so that appreciation sums are
exact and independent of summation order.
"""

from __future__ import annotations

import csv
import io
import json
import re
import sys
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, NamedTuple

CSV_FIELDS = (
    "tx_hash",
    "block_number",
    "timestamp",
    "nft_id",
    "collection",
    "seller",
    "buyer",
    "price_usd",
)
CSV_HEADER = ",".join(CSV_FIELDS)

MICRO = 1_000_000
# 9999-12-31T23:59:59Z
MAX_TIMESTAMP = 253_402_300_799

REJECT_REASONS = ("bad_field", "missing_field", "negative_price", "bad_timestamp")

_PRICE_RE = re.compile(r"(\d+)(?:\.(\d{1,6}))?")
_INT_RE = re.compile(r"\d+")


class IngestError(Exception):
    """Fatal ingest failure: bad header, undecodable bytes, or a strict-mode rejection."""


class TradeRecord(NamedTuple):
    """One purchase of ``nft_id`` by ``buyer`` from ``seller``."""

    tx_id: str
    block: int
    timestamp: int
    nft_id: str
    collection: str
    seller: str
    buyer: str
    price_usd: int  # micro-USD


@dataclass
class IngestReport:
    records_accepted: int = 0
    records_rejected: int = 0
    rejection_reasons: Counter = field(default_factory=Counter)
    time_range: tuple[int, int] | None = None

    @property
    def lines_processed(self) -> int:
        return self.records_accepted + self.records_rejected

    def _accept(self, timestamp: int) -> None:
        self.records_accepted += 1
        tr = self.time_range
        if tr is None:
            self.time_range = (timestamp, timestamp)
        elif timestamp > tr[1]:
            self.time_range = (tr[0], timestamp)
        elif timestamp < tr[0]:
            self.time_range = (timestamp, tr[1])

    def _reject(self, reason: str) -> None:
        self.records_rejected += 1
        self.rejection_reasons[reason] += 1

    def as_dict(self) -> dict:
        return {
            "records_accepted": self.records_accepted,
            "records_rejected": self.records_rejected,
            "rejection_reasons": dict(sorted(self.rejection_reasons.items())),
            "time_range": list(self.time_range) if self.time_range else None,
        }


class _Rejected(Exception):
    def __init__(self, reason: str, detail: str = "") -> None:
        super().__init__(detail or reason)
        self.reason = reason


def parse_usd(text: str) -> int:
    """Parse a non-negative decimal with at most 6 fractional digits into micro-USD.

    >>> parse_usd("100.50")
    100500000
    """
    m = _PRICE_RE.fullmatch(text)
    if m is None:
        raise ValueError(f"not a non-negative decimal with <= 6 fractional digits: {text!r}")
    whole, frac = m.groups()
    micros = int(whole) * MICRO
    if frac:
        micros += int(frac.ljust(6, "0"))
    return micros


def format_usd(micros: int) -> str:
    """Canonical decimal text for a (possibly negative) micro-USD amount.

    Trailing fractional zeros are dropped, so ``format_usd(parse_usd(s))`` is
    the canonical spelling of ``s``.
    """
    sign = "-" if micros < 0 else ""
    whole, frac = divmod(abs(micros), MICRO)
    if frac == 0:
        return f"{sign}{whole}"
    return f"{sign}{whole}.{frac:06d}".rstrip("0")


def normalize_wallet(address: str) -> str:
    return address.strip().lower()


def _wallet_normalizer():
    # Normalised addresses are interned through a dict so repeated wallets
    # share one string object; large corpora repeat wallets heavily.
    cache: dict[str, str] = {}

    def norm(address: str) -> str:
        out = cache.get(address)
        if out is None:
            out = cache[address] = sys.intern(address.strip().lower())
        return out

    return norm


def normalize_wallets(records: Iterable[TradeRecord]) -> Iterator[TradeRecord]:
    """Lower-case and trim seller and buyer addresses.  Idempotent."""
    norm = _wallet_normalizer()
    for rec in records:
        seller, buyer = norm(rec.seller), norm(rec.buyer)
        if seller is rec.seller and buyer is rec.buyer:
            yield rec
        else:
            yield rec._replace(seller=seller, buyer=buyer)


def _required(value, name: str) -> str:
    if value is None:
        raise _Rejected("missing_field", name)
    if not isinstance(value, str):
        raise _Rejected("bad_field", name)
    if not value:
        raise _Rejected("missing_field", name)
    return value


def _fast_csv_record(row: list[str], norm) -> TradeRecord | None:
    """Well-formed CSV rows only; returns None so the caller can fall back
    to ``_build_record`` for the exact rejection reason."""
    tx_id, block, timestamp, nft_id, collection, seller, buyer, price = row
    if not (tx_id and nft_id and buyer and timestamp.isascii() and timestamp.isdigit()):
        return None
    if block and not (block.isascii() and block.isdigit()):
        return None
    ts = int(timestamp)
    if ts > MAX_TIMESTAMP:
        return None
    whole, dot, frac = price.partition(".")
    if not (whole.isascii() and whole.isdigit()):
        return None
    micros = int(whole) * MICRO
    if dot:
        if not (0 < len(frac) <= 6 and frac.isascii() and frac.isdigit()):
            return None
        micros += int(frac.ljust(6, "0"))
    return TradeRecord(
        tx_id, int(block) if block else 0, ts, nft_id, collection, norm(seller), norm(buyer), micros
    )


def _build_record(
    tx_id, block, timestamp, nft_id, collection, seller, buyer, price
) -> TradeRecord:
    """Validate raw field values (strings, or JSON scalars) into a TradeRecord."""
    tx_id = _required(tx_id, "tx_hash")
    nft_id = _required(nft_id, "nft_id")
    buyer = _required(buyer, "buyer")
    if seller is None:
        seller = ""
    elif not isinstance(seller, str):
        raise _Rejected("bad_field", "seller")
    if collection is None:
        collection = ""
    elif not isinstance(collection, str):
        raise _Rejected("bad_field", "collection")
    if "\x00" in tx_id + nft_id + collection + seller + buyer:
        raise _Rejected("bad_field", "NUL character")

    if timestamp is None or timestamp == "":
        raise _Rejected("missing_field", "timestamp")
    if isinstance(timestamp, str):
        if not _INT_RE.fullmatch(timestamp):
            raise _Rejected("bad_timestamp", timestamp)
        timestamp = int(timestamp)
    elif isinstance(timestamp, bool) or not isinstance(timestamp, int):
        raise _Rejected("bad_timestamp", repr(timestamp))
    if not 0 <= timestamp <= MAX_TIMESTAMP:
        raise _Rejected("bad_timestamp", str(timestamp))

    if block is None or block == "":
        block = 0
    elif isinstance(block, str):
        if not _INT_RE.fullmatch(block):
            raise _Rejected("bad_field", "block_number")
        block = int(block)
    elif isinstance(block, bool) or not isinstance(block, int) or block < 0:
        raise _Rejected("bad_field", "block_number")

    if price is None or price == "":
        raise _Rejected("missing_field", "price_usd")
    if isinstance(price, (int, float)) and not isinstance(price, bool):
        # JSON numbers go through their shortest text form
        price = repr(price) if isinstance(price, float) else str(price)
    if not isinstance(price, str):
        raise _Rejected("bad_field", "price_usd")
    if price.startswith("-"):
        try:
            magnitude = parse_usd(price[1:])
        except ValueError:
            raise _Rejected("bad_field", "price_usd") from None
        if magnitude:
            raise _Rejected("negative_price", price)
        price = price[1:]
    try:
        micros = parse_usd(price)
    except ValueError:
        raise _Rejected("bad_field", "price_usd") from None

    return TradeRecord(tx_id, block, timestamp, nft_id, collection, seller, buyer, micros)


def _csv_rows(text: IO[str]) -> Iterator[list[str]]:
    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("empty input: missing CSV header") from None
    if ",".join(header) != CSV_HEADER:
        raise IngestError(f"malformed header: expected {CSV_HEADER!r}, got {','.join(header)!r}")
    while True:
        try:
            yield next(reader)
        except StopIteration:
            return
        except csv.Error:
            # e.g. a NUL byte; the reader resumes at the next line
            yield None


def _iter_csv(text: IO[str], report: IngestReport, strict: bool, norm) -> Iterator[TradeRecord]:
    rows = _csv_rows(text)
    # prime the generator so header errors surface before the caller iterates
    first = next(rows, None)
    if first is None:
        return iter(())
    return _csv_records(first, rows, report, strict, norm)


def _csv_records(first, rows, report, strict, norm) -> Iterator[TradeRecord]:
    width = len(CSV_FIELDS)
    lineno = 1
    for row in _chain_first(first, rows):
        lineno += 1
        if row is not None and not row:
            continue
        if row is not None and len(row) == width:
            rec = _fast_csv_record(row, norm)
            if rec is not None:
                report._accept(rec.timestamp)
                yield rec
                continue
        try:
            if row is None:
                raise _Rejected("bad_field", "unreadable CSV line")
            if len(row) != width:
                raise _Rejected("bad_field", f"expected {width} columns, got {len(row)}")
            rec = _build_record(*row)
            rec = rec._replace(seller=norm(rec.seller), buyer=norm(rec.buyer))
        except _Rejected as exc:
            if strict:
                raise IngestError(f"row {lineno}: {exc.reason} ({exc})") from None
            report._reject(exc.reason)
            continue
        report._accept(rec.timestamp)
        yield rec


def _chain_first(first, rest):
    yield first
    try:
        yield from rest
    except UnicodeDecodeError as exc:
        raise IngestError(f"input is not valid UTF-8: {exc}") from None


def _iter_jsonl(text: IO[str], report: IngestReport, strict: bool, norm) -> Iterator[TradeRecord]:
    lineno = 0
    try:
        for line in text:
            lineno += 1
            if not line.strip():
                continue
            try:
                try:
                    obj = json.loads(line)
                except ValueError:
                    raise _Rejected("bad_field", "invalid JSON") from None
                if not isinstance(obj, dict):
                    raise _Rejected("bad_field", "not a JSON object")
                rec = _build_record(*(obj.get(name) for name in CSV_FIELDS))
                rec = rec._replace(seller=norm(rec.seller), buyer=norm(rec.buyer))
            except _Rejected as exc:
                if strict:
                    raise IngestError(f"line {lineno}: {exc.reason} ({exc})") from None
                report._reject(exc.reason)
                continue
            report._accept(rec.timestamp)
            yield rec
    except UnicodeDecodeError as exc:
        raise IngestError(f"input is not valid UTF-8: {exc}") from None


def _identity(address: str) -> str:
    return address


def parse_trades(
    source: IO[bytes], format: str = "csv", *, strict: bool = False, normalize: bool = False
) -> tuple[Iterator[TradeRecord], IngestReport]:
    """Parse a UTF-8 byte stream of trades.

    Returns a lazy record iterator (input order preserved) and a report that
    is complete once the iterator is exhausted.  Header problems raise
    immediately; bad rows are counted by reason, or raise under ``strict``.
    ``normalize`` applies the ``normalize_wallets`` rule while parsing.
    """
    if format not in ("csv", "jsonl"):
        raise ValueError(f"unknown format {format!r}")
    text = io.TextIOWrapper(source, encoding="utf-8", errors="strict", newline="")
    report = IngestReport()
    norm = _wallet_normalizer() if normalize else _identity
    try:
        if format == "csv":
            records = _iter_csv(text, report, strict, norm)
        else:
            records = _iter_jsonl(text, report, strict, norm)
    except UnicodeDecodeError as exc:
        raise IngestError(f"input is not valid UTF-8: {exc}") from None
    return records, report


def read_trades(path, format: str = "csv", *, strict: bool = False) -> tuple[list[TradeRecord], IngestReport]:
    """Parse and wallet-normalise a whole file."""
    with open(path, "rb") as fh:
        records, report = parse_trades(fh, format, strict=strict, normalize=True)
        out = list(records)
    return out, report


def record_to_row(rec: TradeRecord) -> list[str]:
    return [
        rec.tx_id,
        str(rec.block),
        str(rec.timestamp),
        rec.nft_id,
        rec.collection,
        rec.seller,
        rec.buyer,
        format_usd(rec.price_usd),
    ]


def write_trades_csv(records: Iterable[TradeRecord], out: IO[str]) -> None:
    """Write records in the canonical ingest CSV form.

    Text fields containing NUL cannot be represented and raise ``ValueError``;
    ingest rejects such rows anyway.
    """
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for rec in records:
        row = record_to_row(rec)
        if any("\x00" in v for v in row):
            raise ValueError(f"trade {rec.tx_id!r} has a NUL character in a text field")
        writer.writerow(row)


def write_trades_jsonl(records: Iterable[TradeRecord], out: IO[str]) -> None:
    for rec in records:
        row = dict(zip(CSV_FIELDS, record_to_row(rec)))
        row["block_number"] = rec.block
        row["timestamp"] = rec.timestamp
        out.write(json.dumps(row, separators=(",", ":")) + "\n")

