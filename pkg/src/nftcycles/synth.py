"""Labelled synthetic trade corpora.

Background trading is random; injected rings pass each of their NFTs
around a fixed group of wallets (w1 -> w2 -> ... -> wk -> w1) at a regular
period, which is the wash-trading shape the analytics are meant to flag.
Everything is driven by one seed, so identical configs give identical
bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from math import floor
from typing import IO, Iterator

import numpy as np

from .ingest import CSV_FIELDS, MICRO, TradeRecord, record_to_row

COLLECTIONS = ("etheremon", "cryptokitties", "mlbchampion", "axieinfinity", "decentraland")
LABELS_HEADER = ("wallet", "ring_id", "expected_cycles")
DEFAULT_START = 1_498_176_000  # 2017-06-23T00:00:00Z
SECONDS_PER_BLOCK = 13
FIRST_BLOCK = 3_900_000


class SynthConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RingSpec:
    ring_size: int = 20
    nft_count: int = 1
    traversal_count: int = 2
    period_seconds: int = 4 * 3600
    jitter_seconds: int = 1800
    price_base_usd: int = 100 * MICRO  # micro-USD
    price_step_usd: int = 50_000  # micro-USD per trade, may be negative
    band_hit_ratio: float = 1.0
    band_lo_seconds: int | None = None  # default: 0.85 * period
    band_hi_seconds: int | None = None  # default: 1.15 * period

    @property
    def band(self) -> tuple[int, int]:
        lo = self.band_lo_seconds
        hi = self.band_hi_seconds
        if lo is None:
            lo = self.period_seconds * 17 // 20
        if hi is None:
            hi = self.period_seconds * 23 // 20
        return lo, hi

    def validate(self) -> None:
        if self.ring_size < 2:
            raise SynthConfigError("ring_size must be >= 2")
        if self.nft_count < 1 or self.traversal_count < 1:
            raise SynthConfigError("nft_count and traversal_count must be >= 1")
        if self.jitter_seconds < 0 or self.period_seconds - self.jitter_seconds <= 0:
            raise SynthConfigError("infeasible timing: jitter must be below period")
        if not 0.0 <= self.band_hit_ratio <= 1.0:
            raise SynthConfigError("band_hit_ratio must lie in [0, 1]")
        lo, hi = self.band
        if not 0 < lo < hi:
            raise SynthConfigError("ring band must satisfy 0 < lo < hi")
        p, j = self.period_seconds, self.jitter_seconds
        if self.band_hit_ratio > 0 and (p + j < lo or p - j > hi):
            raise SynthConfigError("period +/- jitter never falls inside the band")

    @property
    def expected_cycles_per_nft(self) -> int:
        # every traversal after the first closes one cycle per ring wallet
        return self.ring_size * (self.traversal_count - 1)


@dataclass(frozen=True)
class SynthConfig:
    n_wallets: int = 1000
    n_nfts: int = 100
    n_background_trades: int = 10_000
    rings: tuple[RingSpec, ...] = ()
    seed: int = 0
    start_time: int = DEFAULT_START
    background_span_seconds: int = 365 * 86_400
    allow_buyer_reuse: bool = False
    contamination_trades: int = 0  # background trades appended to ring NFTs
    case_variants: bool = False
    corrupt_rows: int = 0

    def validate(self) -> None:
        if self.n_wallets < 2 or self.n_nfts < 1 or self.n_background_trades < 0:
            raise SynthConfigError("need n_wallets >= 2, n_nfts >= 1, n_background_trades >= 0")
        if self.background_span_seconds < 1:
            raise SynthConfigError("background_span_seconds must be positive")
        if self.corrupt_rows < 0 or self.contamination_trades < 0:
            raise SynthConfigError("corrupt_rows and contamination_trades must be >= 0")
        for ring in self.rings:
            ring.validate()

    def as_dict(self) -> dict:
        d = asdict(self)
        d["rings"] = [asdict(r) for r in self.rings]
        return d


@dataclass
class GroundTruth:
    ring_wallets: dict[str, int] = field(default_factory=dict)  # wallet -> ring id
    expected_wallet_cycles: dict[str, int] = field(default_factory=dict)
    expected_nft_cycles: dict[str, int] = field(default_factory=dict)
    ring_bands: dict[int, tuple[int, int]] = field(default_factory=dict)
    ring_nfts: dict[str, int] = field(default_factory=dict)  # nft -> ring id

    @property
    def total_ring_cycles(self) -> int:
        return sum(self.expected_nft_cycles.values())


@dataclass
class SynthCorpus:
    records: list[TradeRecord]
    truth: GroundTruth
    meta: dict
    corrupted: dict[int, list[str]] = field(default_factory=dict)  # row index -> raw fields
    case_seed: int | None = None  # set: addresses are emitted with random casing per row

    def rows(self) -> Iterator[list[str]]:
        rng = None if self.case_seed is None else _rng(self.case_seed)
        for i, rec in enumerate(self.records):
            bad = self.corrupted.get(i)
            if bad is not None:
                yield bad
                continue
            row = record_to_row(rec)
            if rng is not None:
                row[5] = _mixed_case(row[5], rng)
                row[6] = _mixed_case(row[6], rng)
            yield row


def wallet_address(label: str) -> str:
    return "0x" + hashlib.blake2b(label.encode(), digest_size=20).hexdigest()


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed % (1 << 64))


def _log_uniform_prices(rng: np.random.Generator, n: int) -> np.ndarray:
    # $1 .. $10,000, rounded to cents
    usd = np.exp(rng.uniform(np.log(1.0), np.log(10_000.0), n))
    return np.round(usd * 100).astype(np.int64) * (MICRO // 100)


def _background(cfg: SynthConfig, rng: np.random.Generator, wallets: list[str]):
    """Yield (timestamp, nft_id, collection, seller, buyer, price) tuples."""
    per_nft = rng.multinomial(cfg.n_background_trades, [1.0 / cfg.n_nfts] * cfg.n_nfts)
    if not cfg.allow_buyer_reuse and per_nft.max(initial=0) + 1 > cfg.n_wallets:
        raise SynthConfigError(
            f"an NFT received {per_nft.max()} trades but only {cfg.n_wallets} wallets exist; "
            "raise n_wallets or set allow_buyer_reuse"
        )
    n_wallets = cfg.n_wallets
    for i, m in enumerate(per_nft.tolist()):
        if m == 0:
            continue
        collection = COLLECTIONS[i % len(COLLECTIONS)]
        nft_id = f"{collection}-{i}"
        times = np.sort(
            rng.integers(cfg.start_time, cfg.start_time + cfg.background_span_seconds, m)
        ).tolist()
        prices = _log_uniform_prices(rng, m).tolist()
        if cfg.allow_buyer_reuse:
            owners = rng.integers(0, n_wallets, m + 1).tolist()
            shifts = rng.integers(1, n_wallets, m + 1).tolist()
            # buyer must differ from the current owner
            for k in range(1, m + 1):
                if owners[k] == owners[k - 1]:
                    owners[k] = (owners[k] + shifts[k]) % n_wallets
        else:
            owners = rng.choice(n_wallets, m + 1, replace=False).tolist()
        for k in range(m):
            yield (times[k], nft_id, collection, wallets[owners[k]], wallets[owners[k + 1]], prices[k])


def _band_mask(rng: np.random.Generator, n: int, ratio: float) -> list[bool]:
    """Evenly spread hits: any run of consecutive positions has a hit count
    within one of ``ratio * run_length``."""
    r = Fraction(ratio).limit_denominator(1_000_000)
    phase = Fraction(int(rng.integers(0, 1_000_000)), 1_000_000)
    return [floor((i + 1) * r + phase) - floor(i * r + phase) == 1 for i in range(n)]


def ring_deltas(spec: RingSpec, rng: np.random.Generator, n: int) -> list[int]:
    """``n`` integer inter-trade gaps honouring the ring's band-hit ratio."""
    lo, hi = spec.band
    p, j = spec.period_seconds, spec.jitter_seconds
    in_lo, in_hi = max(p - j, lo), min(p + j, hi)
    gap = max(1, (hi - lo) // 4)
    below = (max(1, lo // 4), lo - gap)
    above = (hi + gap, hi + gap + p)
    out = []
    for hit in _band_mask(rng, n, spec.band_hit_ratio):
        if hit:
            out.append(int(rng.integers(in_lo, in_hi + 1)))
        elif below[1] >= below[0] and rng.random() < 0.5:
            out.append(int(rng.integers(below[0], below[1] + 1)))
        else:
            out.append(int(rng.integers(above[0], above[1] + 1)))
    return out


def _ring_trades(cfg: SynthConfig, rng: np.random.Generator, truth: GroundTruth):
    for ring_id, spec in enumerate(cfg.rings):
        members = [wallet_address(f"ring{ring_id}:{j}") for j in range(spec.ring_size)]
        for w in members:
            truth.ring_wallets[w] = ring_id
            truth.expected_wallet_cycles[w] = spec.nft_count * (spec.traversal_count - 1)
        truth.ring_bands[ring_id] = spec.band
        k = spec.ring_size
        n = k * spec.traversal_count
        for j in range(spec.nft_count):
            collection = COLLECTIONS[(ring_id + j) % len(COLLECTIONS)]
            nft_id = f"ring{ring_id}-{collection}-{j}"
            truth.ring_nfts[nft_id] = ring_id
            truth.expected_nft_cycles[nft_id] = spec.expected_cycles_per_nft
            t = cfg.start_time + int(rng.integers(0, 86_400))
            deltas = ring_deltas(spec, rng, n - 1)
            for i in range(n):
                price = max(0, spec.price_base_usd + i * spec.price_step_usd)
                yield (t, nft_id, collection, members[i % k], members[(i + 1) % k], price)
                if i < n - 1:
                    t += deltas[i]
            # contamination: outsiders buy the NFT after the ring is done with it
            owner = members[n % k]
            for _ in range(cfg.contamination_trades):
                t += int(rng.integers(3600, 86_400))
                outsider = wallet_address(f"outsider:{ring_id}:{j}:{int(rng.integers(0, 1 << 62))}")
                yield (t, nft_id, collection, owner, outsider, spec.price_base_usd)
                owner = outsider


_CORRUPTIONS = (
    lambda row: row[:7] + ["-" + row[7] if row[7] != "0" else "-1"],  # negative_price
    lambda row: row[:2] + ["not-a-time"] + row[3:],  # bad_timestamp
    lambda row: row[:6] + [""] + row[7:],  # missing buyer
    lambda row: row[:7] + ["1.2.3"],  # bad price text
)


def _mixed_case(address: str, rng: np.random.Generator) -> str:
    flips = rng.random(len(address)) < 0.5
    return address[:2] + "".join(
        ch.upper() if flip else ch for ch, flip in zip(address[2:], flips[2:].tolist())
    )


def generate(cfg: SynthConfig) -> SynthCorpus:
    cfg.validate()
    rng = _rng(cfg.seed)
    wallets = [wallet_address(f"bg:{i}") for i in range(cfg.n_wallets)]
    truth = GroundTruth()

    raw = list(_background(cfg, rng, wallets))
    n_background = len(raw)
    raw.extend(_ring_trades(cfg, rng, truth))
    # stable sort keeps generation order inside equal timestamps, and tx ids
    # are assigned afterwards, so (timestamp, block, tx_id) reproduces it
    order = sorted(range(len(raw)), key=lambda i: raw[i][0])

    records = []
    for seq, i in enumerate(order):
        ts, nft_id, collection, seller, buyer, price = raw[i]
        block = FIRST_BLOCK + (ts - cfg.start_time) // SECONDS_PER_BLOCK
        records.append(
            TradeRecord(f"0x{seq:016x}", block, ts, nft_id, collection, seller, buyer, price)
        )
    del raw

    corrupted = {}
    if cfg.corrupt_rows:
        background_rows = [k for k, r in enumerate(records) if r.nft_id not in truth.ring_nfts]
        if cfg.corrupt_rows > len(background_rows):
            raise SynthConfigError("more corrupt rows requested than background rows exist")
        picks = sorted(rng.choice(len(background_rows), cfg.corrupt_rows, replace=False).tolist())
        for n, p in enumerate(picks):
            k = background_rows[p]
            corrupted[k] = _CORRUPTIONS[n % len(_CORRUPTIONS)](record_to_row(records[k]))

    case_seed = int(rng.integers(0, 1 << 62)) if cfg.case_variants else None

    meta = {
        "config": cfg.as_dict(),
        "trades": len(records),
        "background_trades": n_background,
        "ring_trades": len(records) - n_background,
        "nfts": len({r.nft_id for r in records}),
        "buyers": len({r.buyer for r in records}),
        "corrupt_rows": len(corrupted),
        "expected_ring_cycles": truth.total_ring_cycles,
        "ring_bands": {str(k): list(v) for k, v in truth.ring_bands.items()},
    }
    return SynthCorpus(records, truth, meta, corrupted, case_seed)


def write_trades(corpus: SynthCorpus, out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    writer.writerows(corpus.rows())


def write_labels(truth: GroundTruth, out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(LABELS_HEADER)
    for w in sorted(truth.ring_wallets, key=lambda w: (truth.ring_wallets[w], w)):
        writer.writerow((w, truth.ring_wallets[w], truth.expected_wallet_cycles[w]))


def read_labels(src: IO[str]) -> dict[str, tuple[int, int]]:
    """wallet -> (ring_id, expected_cycles)"""
    reader = csv.reader(src)
    header = next(reader, None)
    if header is None or tuple(header) != LABELS_HEADER:
        raise ValueError(f"malformed labels header: {header!r}")
    return {w: (int(r), int(c)) for w, r, c in reader}


def write_meta(corpus: SynthCorpus, out: IO[str]) -> None:
    json.dump(corpus.meta, out, indent=2, sort_keys=True)
    out.write("\n")
