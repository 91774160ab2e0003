"""Finalised temporal bipartite graph of wallets and NFTs.

Each NFT node holds its purchases ordered by ``(timestamp, block, tx_id)``;
each wallet node holds references to the purchases it made.  The graph is
built once from a batch of records and never mutated afterwards.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from operator import attrgetter
from types import MappingProxyType
from typing import Iterable, Mapping

from .ingest import MAX_TIMESTAMP, TradeRecord

ORDERING_KEY = ("timestamp", "block", "tx_id")
MODES = ("lenient", "strict_chain")

# A path entry carries buyer, seller, timestamp, block, tx_id and price; the
# trade record already has exactly those fields, so it is stored as-is.
PathEntry = TradeRecord

_sort_key = attrgetter(*ORDERING_KEY)


class GraphError(ValueError):
    pass


class DuplicateTradeError(GraphError):
    def __init__(self, nft_id: str, tx_id: str) -> None:
        super().__init__(f"duplicate trade (nft_id={nft_id!r}, tx_id={tx_id!r})")
        self.nft_id = nft_id
        self.tx_id = tx_id


class UnknownNFTError(KeyError):
    pass


@dataclass(frozen=True)
class OwnershipPath:
    nft_id: str
    entries: tuple[PathEntry, ...]
    chain_breaks: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def buyers(self) -> list[str]:
        return [e.buyer for e in self.entries]

    def segments(self) -> list[tuple[int, int]]:
        """Half-open ``(start, stop)`` index ranges of seller-consistent runs."""
        bounds = [0, *self.chain_breaks, len(self.entries)]
        return [(a, b) for a, b in zip(bounds, bounds[1:]) if b > a]


@dataclass(frozen=True)
class TemporalBipartiteGraph:
    nfts: Mapping[str, OwnershipPath]
    wallets: Mapping[str, tuple[tuple[str, int], ...]]
    trade_count: int
    mode: str = "lenient"


def _make_path(nft_id: str, trades: list[TradeRecord]) -> OwnershipPath:
    trades.sort(key=_sort_key)
    if len({rec.tx_id for rec in trades}) != len(trades):
        seen = set()
        for rec in trades:
            if rec.tx_id in seen:
                raise DuplicateTradeError(nft_id, rec.tx_id)
            seen.add(rec.tx_id)
    breaks = [
        k for k in range(1, len(trades)) if trades[k].seller != trades[k - 1].buyer
    ]
    return OwnershipPath(nft_id, tuple(trades), tuple(breaks))


def build_graph(records: Iterable[TradeRecord], mode: str = "lenient") -> TemporalBipartiteGraph:
    """Group records per NFT, order them and index purchases per wallet.

    ``mode`` is stamped on the graph; in ``strict_chain`` mode downstream
    cycle extraction treats each seller-consistent segment independently.
    """
    if mode not in MODES:
        raise GraphError(f"unknown mode {mode!r}")
    per_nft: dict[str, list[TradeRecord]] = defaultdict(list)
    count = 0
    for rec in records:
        if not 0 <= rec.timestamp <= MAX_TIMESTAMP:
            raise GraphError(f"timestamp out of range in tx {rec.tx_id!r}: {rec.timestamp}")
        per_nft[rec.nft_id].append(rec)
        count += 1

    nfts: dict[str, OwnershipPath] = {}
    wallet_refs: dict[str, list[tuple[str, int]]] = defaultdict(list)
    for nft_id in sorted(per_nft):
        path = _make_path(nft_id, per_nft.pop(nft_id))
        nfts[nft_id] = path
        for k, entry in enumerate(path.entries):
            wallet_refs[entry.buyer].append((nft_id, k))

    wallets = {w: tuple(wallet_refs[w]) for w in sorted(wallet_refs)}
    return TemporalBipartiteGraph(MappingProxyType(nfts), MappingProxyType(wallets), count, mode)


def ownership_sequence(graph: TemporalBipartiteGraph, nft_id: str) -> OwnershipPath:
    try:
        return graph.nfts[nft_id]
    except KeyError:
        raise UnknownNFTError(nft_id) from None


def graph_stats(graph: TemporalBipartiteGraph) -> dict:
    lo = hi = None
    breaks = 0
    for path in graph.nfts.values():
        breaks += len(path.chain_breaks)
        first, last = path.entries[0].timestamp, path.entries[-1].timestamp
        lo = first if lo is None or first < lo else lo
        hi = last if hi is None or last > hi else hi
    return {
        "nft_count": len(graph.nfts),
        "wallet_count": len(graph.wallets),
        "trade_count": graph.trade_count,
        "chain_break_count": breaks,
        "time_range": None if lo is None else (lo, hi),
    }


def iter_records(graph: TemporalBipartiteGraph):
    """All trades in canonical snapshot order: by NFT id, then path order."""
    for path in graph.nfts.values():
        yield from path.entries
