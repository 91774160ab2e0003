"""Trader-level analytics over a cycle table.

Profiles aggregate each wallet's cycles; tiers bucket wallets by cycle
count; inter-purchase deltas and band fractions fingerprint regular,
bot-like timing; the suspicion score combines three indicator criteria.
Nothing here asserts intent: flags describe patterns only.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import IO, Iterable, Sequence

import numpy as np

from .cycles import Cycle
from .graph import TemporalBipartiteGraph
from .ingest import format_usd

HOUR = 3600
DAY = 86_400
DEFAULT_BAND_HOURS = (Decimal("3.4"), Decimal("4.6"))
DEFAULT_WINDOW_HOURS = Decimal("1.2")
TIERS = ("low", "mid", "whale")
DELTA_SCOPES = ("cycle", "wallet")
MEAN_APPRECIATION_FORMULA = "total_appreciation_usd / cycle_count"

_CENT = Decimal("0.01")
_MICRO = Decimal("0.000001")


class ConfigError(ValueError):
    pass


def hours_to_seconds(hours) -> Decimal:
    """Exact conversion; floats go through their shortest decimal text."""
    return Decimal(str(hours)) * HOUR


@dataclass(frozen=True)
class TraderProfile:
    wallet: str
    cycle_count: int
    total_appreciation_usd: int
    mean_appreciation_usd: int
    distinct_nfts: int
    distinct_counterparties: int
    transaction_count: int
    tier: str
    band_fraction: float


PROFILE_FIELDS = (
    "wallet",
    "cycle_count",
    "total_appreciation_usd",
    "mean_appreciation_usd",
    "distinct_nfts",
    "distinct_counterparties",
    "transaction_count",
    "tier",
    "band_fraction",
)


@dataclass(frozen=True)
class TierBreakdown:
    thresholds: tuple[int, int]
    counts: dict[str, int]
    percentages: dict[str, Decimal]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def summary_line(self) -> str:
        return " ".join(
            f"{t}: {self.counts[t]} ({self.percentages[t]}%)" for t in TIERS
        )


@dataclass(frozen=True)
class SuspicionConfig:
    min_cycles: int = 15
    min_band_fraction: float = 0.88
    max_counterparties: int = 20


@dataclass(frozen=True)
class Suspicion:
    wallet: str
    score: float
    flags: tuple[str, ...] = field(default=())


# -- tiers --------------------------------------------------------------------


def _check_thresholds(low_max: int, mid_max: int) -> None:
    if low_max >= mid_max:
        raise ConfigError(f"low_max ({low_max}) must be below mid_max ({mid_max})")


def tier_of(cycle_count: int, low_max: int = 4, mid_max: int = 14) -> str:
    if cycle_count <= low_max:
        return "low"
    if cycle_count <= mid_max:
        return "mid"
    return "whale"


def percentage(count: int, total: int) -> Decimal:
    """``count / total`` as a percentage, two decimals, half rounded up."""
    if total == 0:
        return Decimal("0.00")
    return (Decimal(count) * 100 / Decimal(total)).quantize(_CENT, rounding=ROUND_HALF_UP)


def classify_tiers(
    profiles: Sequence[TraderProfile], low_max: int = 4, mid_max: int = 14
) -> TierBreakdown:
    _check_thresholds(low_max, mid_max)
    counts = dict.fromkeys(TIERS, 0)
    for p in profiles:
        counts[tier_of(p.cycle_count, low_max, mid_max)] += 1
    total = len(profiles)
    return TierBreakdown(
        (low_max, mid_max), counts, {t: percentage(counts[t], total) for t in TIERS}
    )


# -- timing -------------------------------------------------------------------


def inter_purchase_deltas(cycles: Iterable[Cycle], graph: TemporalBipartiteGraph) -> list[int]:
    """Consecutive timestamp differences inside each cycle, cycle by cycle."""
    out: list[int] = []
    for c in cycles:
        entries = graph.nfts[c.nft_id].entries
        times = [e.timestamp for e in entries[c.start_index : c.end_index + 1]]
        out.extend(b - a for a, b in zip(times, times[1:]))
    return out


def wallet_purchase_deltas(wallet: str, graph: TemporalBipartiteGraph) -> list[int]:
    """Gaps between all of a wallet's purchases, across every NFT, in time order."""
    times = sorted(graph.nfts[nft].entries[k].timestamp for nft, k in graph.wallets.get(wallet, ()))
    return [b - a for a, b in zip(times, times[1:])]


def band_fraction(deltas: Sequence[int], band_lo, band_hi) -> float:
    if not band_lo < band_hi:
        raise ConfigError("band_lo must be below band_hi")
    if not deltas:
        return 0.0
    inside = sum(1 for d in deltas if band_lo <= d <= band_hi)
    return inside / len(deltas)


def dominant_band(deltas: Sequence[int], window_width, step) -> tuple[float, float, float]:
    """Window of fixed width with the highest delta coverage.

    Window starts run from min(deltas) to max(deltas) in ``step`` increments;
    ties go to the lowest start.
    """
    if window_width <= 0 or step <= 0:
        raise ConfigError("window width and step must be positive")
    if len(deltas) == 0:
        raise ValueError("dominant_band needs at least one delta")
    width, step = float(window_width), float(step)
    d = np.sort(np.asarray(deltas, dtype=np.float64))
    lo, hi = d[0], d[-1]
    starts = lo + step * np.arange(int((hi - lo) // step) + 1)
    covered = np.searchsorted(d, starts + width, side="right") - np.searchsorted(d, starts, side="left")
    best = int(np.argmax(covered))
    s = float(starts[best])
    return s, s + width, float(covered[best]) / len(d)


# -- profiles -----------------------------------------------------------------


def _covered_entries(spans: list[tuple[int, int]]) -> int:
    """Size of the union of closed integer intervals."""
    total = 0
    cur_lo = cur_hi = None
    for lo, hi in sorted(spans):
        if cur_hi is None or lo > cur_hi:
            if cur_hi is not None:
                total += cur_hi - cur_lo + 1
            cur_lo, cur_hi = lo, hi
        elif hi > cur_hi:
            cur_hi = hi
    if cur_hi is not None:
        total += cur_hi - cur_lo + 1
    return total


def _round_div(num: int, den: int) -> int:
    """Integer division rounding halves away from zero."""
    q, r = divmod(abs(num), den)
    if 2 * r >= den:
        q += 1
    return q if num >= 0 else -q


def group_by_wallet(cycles: Iterable[Cycle]) -> dict[str, list[Cycle]]:
    grouped: dict[str, list[Cycle]] = defaultdict(list)
    for c in cycles:
        grouped[c.wallet].append(c)
    return grouped


def trader_profiles(
    cycles: Iterable[Cycle],
    graph: TemporalBipartiteGraph,
    *,
    low_max: int = 4,
    mid_max: int = 14,
    band_lo=DEFAULT_BAND_HOURS[0] * HOUR,
    band_hi=DEFAULT_BAND_HOURS[1] * HOUR,
    delta_scope: str = "cycle",
) -> list[TraderProfile]:
    """One profile per wallet with at least one cycle.

    Sorted by cycle count descending, then wallet ascending.
    """
    _check_thresholds(low_max, mid_max)
    if delta_scope not in DELTA_SCOPES:
        raise ConfigError(f"unknown delta scope {delta_scope!r}")
    profiles = []
    for wallet, own in group_by_wallet(cycles).items():
        total = sum(c.appreciation_usd for c in own)
        others: set[str] = set()
        spans: dict[str, list[tuple[int, int]]] = defaultdict(list)
        for c in own:
            entries = graph.nfts[c.nft_id].entries
            others.update(e.buyer for e in entries[c.start_index + 1 : c.end_index])
            spans[c.nft_id].append((c.start_index, c.end_index))
        others.discard(wallet)
        if delta_scope == "cycle":
            deltas = inter_purchase_deltas(own, graph)
        else:
            deltas = wallet_purchase_deltas(wallet, graph)
        profiles.append(
            TraderProfile(
                wallet=wallet,
                cycle_count=len(own),
                total_appreciation_usd=total,
                mean_appreciation_usd=_round_div(total, len(own)),
                distinct_nfts=len(spans),
                distinct_counterparties=len(others),
                transaction_count=sum(_covered_entries(s) for s in spans.values()),
                tier=tier_of(len(own), low_max, mid_max),
                band_fraction=band_fraction(deltas, band_lo, band_hi),
            )
        )
    profiles.sort(key=lambda p: (-p.cycle_count, p.wallet))
    return profiles


# -- suspicion ----------------------------------------------------------------


def suspicion_scores(
    profiles: Iterable[TraderProfile], config: SuspicionConfig = SuspicionConfig()
) -> list[Suspicion]:
    """Mean of three indicators: many cycles, regular timing, closed group."""
    out = []
    for p in profiles:
        flags = []
        if p.cycle_count >= config.min_cycles:
            flags.append("many_cycles")
        if p.band_fraction >= config.min_band_fraction:
            flags.append("regular_timing")
        if p.distinct_counterparties <= config.max_counterparties:
            flags.append("closed_group")
        out.append(Suspicion(p.wallet, len(flags) / 3, tuple(flags)))
    out.sort(key=lambda s: (-s.score, s.wallet))
    return out


# -- plot tables --------------------------------------------------------------


def seconds_to_days(seconds: int) -> Decimal:
    return (Decimal(seconds) / DAY).quantize(_MICRO, rounding=ROUND_HALF_UP)


def plot_tables(cycles: Iterable[Cycle]) -> dict[str, list[tuple]]:
    hops, appreciation = [], []
    for c in cycles:
        days = seconds_to_days(c.duration_seconds)
        hops.append((days, c.hop_length))
        appreciation.append((days, c.appreciation_usd))
    return {"duration_vs_hops": hops, "duration_vs_appreciation": appreciation}


# -- report writers -----------------------------------------------------------


def _writer(out: IO[str]):
    return csv.writer(out, lineterminator="\n")


def write_traders_csv(profiles: Iterable[TraderProfile], out: IO[str]) -> None:
    w = _writer(out)
    w.writerow(PROFILE_FIELDS)
    for p in profiles:
        w.writerow(
            [
                p.wallet,
                p.cycle_count,
                format_usd(p.total_appreciation_usd),
                format_usd(p.mean_appreciation_usd),
                p.distinct_nfts,
                p.distinct_counterparties,
                p.transaction_count,
                p.tier,
                f"{p.band_fraction:.6f}",
            ]
        )


def write_tiers_csv(breakdown: TierBreakdown, out: IO[str]) -> None:
    low_max, mid_max = breakdown.thresholds
    w = _writer(out)
    w.writerow(("tier", "min_cycles", "max_cycles", "count", "percentage"))
    bounds = {"low": (1, low_max), "mid": (low_max + 1, mid_max), "whale": (mid_max + 1, "")}
    for t in TIERS:
        w.writerow((t, *bounds[t], breakdown.counts[t], breakdown.percentages[t]))


def write_timing_csv(deltas: Iterable[int], out: IO[str]) -> None:
    w = _writer(out)
    w.writerow(("delta_seconds",))
    w.writerows((d,) for d in deltas)


def write_plot_csv(rows: Iterable[tuple], second_column: str, out: IO[str]) -> None:
    w = _writer(out)
    w.writerow(("duration_days", second_column))
    if second_column == "appreciation_usd":
        w.writerows((days, format_usd(v)) for days, v in rows)
    else:
        w.writerows(rows)


def write_suspicion_csv(scores: Iterable[Suspicion], out: IO[str]) -> None:
    w = _writer(out)
    w.writerow(("wallet", "score", "flags"))
    for s in scores:
        w.writerow((s.wallet, f"{s.score:.4f}", "|".join(s.flags)))
