"""Brute-force reference for cycle extraction, used only for verification.

Nothing here imports the graph or cycles modules: ordering and pairing are
re-derived from the raw trade list so that a misreading in the fast path
shows up as a set mismatch instead of being shared.
"""

from __future__ import annotations

import random
from functools import cmp_to_key

from .ingest import TradeRecord


def _compare(a: TradeRecord, b: TradeRecord) -> int:
    for x, y in ((a.timestamp, b.timestamp), (a.block, b.block), (a.tx_id, b.tx_id)):
        if x < y:
            return -1
        if x > y:
            return 1
    return 0


def _insertion_sorted(trades: list[TradeRecord]) -> list[TradeRecord]:
    out: list[TradeRecord] = []
    for t in trades:
        i = len(out)
        while i > 0 and _compare(out[i - 1], t) > 0:
            i -= 1
        out.insert(i, t)
    return out


def brute_force_cycles(
    records: list[TradeRecord], min_hops: int = 1, strict_chain: bool = False
) -> set[tuple[str, str, str, str]]:
    """Every (nft_id, wallet, start_tx, end_tx) recurrence, by exhaustive pair checking.

    A pair of positions i < j on one NFT qualifies when both purchases were
    made by the same wallet, that wallet makes no purchase strictly between
    them, and j - i >= min_hops.  Under ``strict_chain`` the pair must also
    not straddle a position whose seller differs from the previous buyer.
    """
    by_nft: dict[str, list[TradeRecord]] = {}
    for r in records:
        by_nft.setdefault(r.nft_id, []).append(r)

    found = set()
    for nft_id, trades in by_nft.items():
        seq = _insertion_sorted(trades)
        n = len(seq)
        for i in range(n):
            for j in range(i + 1, n):
                if seq[i].buyer != seq[j].buyer or j - i < min_hops:
                    continue
                if any(seq[m].buyer == seq[i].buyer for m in range(i + 1, j)):
                    continue
                if strict_chain and any(
                    seq[m].seller != seq[m - 1].buyer for m in range(i + 1, j + 1)
                ):
                    continue
                found.add((nft_id, seq[i].buyer, seq[i].tx_id, seq[j].tx_id))
    return found


def random_instance(
    seed: int, max_wallets: int = 12, max_nfts: int = 5, max_trades: int = 60
) -> list[TradeRecord]:
    """A small shuffled trade list with deliberate timestamp and block ties."""
    rng = random.Random(seed)
    wallets = [f"w{i}" for i in range(rng.randint(1, max_wallets))]
    nfts = [f"nft{i}" for i in range(rng.randint(1, max_nfts))]
    n = rng.randint(0, max_trades)
    horizon = rng.randint(1, max(1, n // 2))
    owner = {nft: rng.choice(wallets) for nft in nfts}
    trades = []
    for k in range(n):
        nft = rng.choice(nfts)
        buyer = rng.choice(wallets)
        # mostly chain-consistent sellers, occasionally an off-market break
        seller = owner[nft] if rng.random() < 0.8 else rng.choice(wallets)
        ts = rng.randint(0, horizon)
        block = rng.choice([0, ts, rng.randint(0, 3)])
        tx = f"t{rng.getrandbits(12):03x}{k:03d}"
        price = rng.randint(0, 5_000_000)
        trades.append(TradeRecord(tx, block, ts, nft, "", seller, buyer, price))
        owner[nft] = buyer
    rng.shuffle(trades)
    return trades
