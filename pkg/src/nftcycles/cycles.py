"""Wallet recurrences along NFT ownership paths.

A cycle is recorded whenever a wallet buys an NFT it has bought before.
Occurrences are paired consecutively: a wallet at positions p1 < p2 < p3
yields (p1, p2) and (p2, p3), never the nested (p1, p3).
"""

from __future__ import annotations

import csv
import os
from bisect import bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import IO, Iterable, Iterator

from .graph import OwnershipPath, TemporalBipartiteGraph
from .ingest import format_usd, parse_usd

PAIRING_RULE = "consecutive_occurrence"
DEFAULT_MIN_HOPS = 2


@dataclass(frozen=True, slots=True)
class Cycle:
    nft_id: str
    wallet: str
    start_index: int
    end_index: int
    start_tx: str
    end_tx: str
    start_time: int
    end_time: int
    duration_seconds: int
    hop_length: int
    unique_wallets: int
    sold_price_usd: int
    repurchase_price_usd: int
    appreciation_usd: int
    is_self_transfer: bool
    spans_break: bool

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.nft_id, self.wallet, self.start_tx, self.end_tx)


CYCLE_FIELDS = tuple(f.name for f in fields(Cycle))
CYCLE_HEADER = ",".join(CYCLE_FIELDS)
_MONEY_FIELDS = {"sold_price_usd", "repurchase_price_usd", "appreciation_usd"}


def _make_cycle(path: OwnershipPath, start: int, end: int, buyers: list[str]) -> Cycle:
    entries = path.entries
    first, last = entries[start], entries[end]
    sold = entries[start + 1].price_usd
    hops = end - start
    # a cycle spans a break if a break index b satisfies start < b <= end
    breaks = path.chain_breaks
    spans = bisect_right(breaks, end) > bisect_right(breaks, start)
    return Cycle(
        nft_id=path.nft_id,
        wallet=first.buyer,
        start_index=start,
        end_index=end,
        start_tx=first.tx_id,
        end_tx=last.tx_id,
        start_time=first.timestamp,
        end_time=last.timestamp,
        duration_seconds=last.timestamp - first.timestamp,
        hop_length=hops,
        unique_wallets=len(set(buyers[start:end])),
        sold_price_usd=sold,
        repurchase_price_usd=last.price_usd,
        appreciation_usd=last.price_usd - sold,
        is_self_transfer=hops == 1,
        spans_break=spans,
    )


def _pairs(buyers: list[str], lo: int, hi: int, min_hops: int) -> Iterator[tuple[int, int]]:
    last_seen: dict[str, int] = {}
    for pos in range(lo, hi):
        w = buyers[pos]
        prev = last_seen.get(w)
        if prev is not None and pos - prev >= min_hops:
            yield prev, pos
        last_seen[w] = pos


def extract_cycles(
    path: OwnershipPath, min_hops: int = DEFAULT_MIN_HOPS, strict_chain: bool = False
) -> list[Cycle]:
    """All consecutive-occurrence cycles on one path, sorted by (start_index, wallet).

    With ``strict_chain`` each seller-consistent segment is scanned on its
    own, so no cycle crosses a chain break.
    """
    if min_hops < 1:
        raise ValueError("min_hops must be >= 1")
    buyers = path.buyers
    if strict_chain:
        ranges = path.segments()
    else:
        ranges = [(0, len(buyers))]
    pairs = [p for lo, hi in ranges for p in _pairs(buyers, lo, hi, min_hops)]
    pairs.sort(key=lambda p: (p[0], buyers[p[0]]))
    # unique_wallets counts buyers over [start, end]; the end buyer equals the
    # start buyer so the half-open slice [start, end) has the same distinct set
    return [_make_cycle(path, s, e, buyers) for s, e in pairs]


def _extract_many(paths: list[OwnershipPath], min_hops: int, strict: bool) -> list[Cycle]:
    out: list[Cycle] = []
    for path in paths:
        out.extend(extract_cycles(path, min_hops, strict))
    return out


def cycle_table(
    graph: TemporalBipartiteGraph,
    min_hops: int = DEFAULT_MIN_HOPS,
    appreciating_only: bool = False,
    threads: int | None = 1,
) -> list[Cycle]:
    """Cycles over every NFT, sorted by (nft_id, start_index, wallet).

    ``threads`` > 1 spreads NFTs over a thread pool; the final sort makes the
    result independent of the worker count.
    """
    strict = graph.mode == "strict_chain"
    paths = [p for p in graph.nfts.values() if len(p) > 1]
    if threads is None:
        threads = os.cpu_count() or 1
    if threads <= 1 or len(paths) < 2:
        cycles = _extract_many(paths, min_hops, strict)
    else:
        chunks = [paths[i::threads] for i in range(threads)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = pool.map(lambda ch: _extract_many(ch, min_hops, strict), chunks)
            cycles = [c for part in parts for c in part]
    if appreciating_only:
        cycles = [c for c in cycles if c.appreciation_usd > 0]
    cycles.sort(key=lambda c: (c.nft_id, c.start_index, c.wallet))
    return cycles


# -- CSV ----------------------------------------------------------------------


def _cycle_row(c: Cycle) -> list[str]:
    row = []
    for name in CYCLE_FIELDS:
        value = getattr(c, name)
        if name in _MONEY_FIELDS:
            row.append(format_usd(value))
        elif isinstance(value, bool):
            row.append("true" if value else "false")
        else:
            row.append(str(value))
    return row


def write_cycles_csv(cycles: Iterable[Cycle], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CYCLE_FIELDS)
    writer.writerows(map(_cycle_row, cycles))


class CycleFileError(ValueError):
    pass


def _parse_money(text: str) -> int:
    if text.startswith("-"):
        return -parse_usd(text[1:])
    return parse_usd(text)


def _parse_bool(text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def read_cycles_csv(src: IO[str]) -> list[Cycle]:
    """Inverse of ``write_cycles_csv``; raises CycleFileError on any malformed row."""
    reader = csv.reader(src)
    header = next(reader, None)
    if header is None or ",".join(header) != CYCLE_HEADER:
        raise CycleFileError(f"malformed cycles header: {header!r}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CYCLE_FIELDS):
            raise CycleFileError(f"line {lineno}: expected {len(CYCLE_FIELDS)} columns")
        values = []
        try:
            for name, text in zip(CYCLE_FIELDS, row):
                if name in ("nft_id", "wallet", "start_tx", "end_tx"):
                    values.append(text)
                elif name in _MONEY_FIELDS:
                    values.append(_parse_money(text))
                elif name in ("is_self_transfer", "spans_break"):
                    values.append(_parse_bool(text))
                else:
                    values.append(int(text))
        except ValueError as exc:
            raise CycleFileError(f"line {lineno}: {exc}") from None
        cyc = Cycle(*values)
        if cyc.end_index <= cyc.start_index or cyc.hop_length != cyc.end_index - cyc.start_index:
            raise CycleFileError(f"line {lineno}: inconsistent indices")
        out.append(cyc)
    return out
