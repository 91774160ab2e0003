"""Time-respecting ownership cycles in NFT trade data."""

__version__ = "0.1.0"

from .analytics import (
    SuspicionConfig,
    TierBreakdown,
    TraderProfile,
    band_fraction,
    classify_tiers,
    dominant_band,
    inter_purchase_deltas,
    plot_tables,
    suspicion_scores,
    trader_profiles,
)
from .cycles import Cycle, cycle_table, extract_cycles
from .graph import OwnershipPath, TemporalBipartiteGraph, build_graph, graph_stats, ownership_sequence
from .ingest import IngestReport, TradeRecord, normalize_wallets, parse_trades
from .oracle import brute_force_cycles

__all__ = [
    "Cycle",
    "IngestReport",
    "OwnershipPath",
    "SuspicionConfig",
    "TemporalBipartiteGraph",
    "TierBreakdown",
    "TradeRecord",
    "TraderProfile",
    "band_fraction",
    "brute_force_cycles",
    "build_graph",
    "classify_tiers",
    "cycle_table",
    "dominant_band",
    "extract_cycles",
    "graph_stats",
    "inter_purchase_deltas",
    "normalize_wallets",
    "ownership_sequence",
    "parse_trades",
    "plot_tables",
    "suspicion_scores",
    "trader_profiles",
]
