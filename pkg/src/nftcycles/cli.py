"""``nftcycles`` command line: cycles, report, simulate, verify, stats."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
import tempfile
from pathlib import Path
from typing import Callable, IO

from . import __version__
from . import analytics as an
from .cycles import (
    DEFAULT_MIN_HOPS,
    PAIRING_RULE,
    CycleFileError,
    cycle_table,
    read_cycles_csv,
    write_cycles_csv,
)
from .graph import ORDERING_KEY, GraphError, build_graph, graph_stats
from .ingest import IngestError, read_trades
from .oracle import brute_force_cycles, random_instance
from .synth import (
    RingSpec,
    SynthConfig,
    SynthConfigError,
    generate,
    write_labels,
    write_meta,
    write_trades,
)

EXIT_OK, EXIT_FATAL, EXIT_USAGE = 0, 1, 2


class _Fatal(Exception):
    def __init__(self, message: str, code: int = EXIT_FATAL) -> None:
        super().__init__(message)
        self.code = code


def _err(msg: str) -> None:
    print(f"nftcycles: {msg}", file=sys.stderr)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def atomic_write(path: Path, fill: Callable[[IO[str]], None]) -> None:
    """Write a text file via a temp file in the same directory and rename it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fill(fh)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _write_json(path: Path, obj: dict) -> None:
    def fill(fh):
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")

    atomic_write(path, fill)


def _load_graph(args, mode: str):
    path = Path(args.input)
    if not path.is_file():
        raise _Fatal(f"input file not found: {path}")
    try:
        records, report = read_trades(path, args.format, strict=args.strict)
        graph = build_graph(records, mode)
    except (IngestError, GraphError) as exc:
        raise _Fatal(str(exc)) from None
    del records
    if report.records_rejected:
        reasons = ", ".join(f"{k}={v}" for k, v in sorted(report.rejection_reasons.items()))
        _err(f"rejected {report.records_rejected} rows ({reasons})")
    return graph, report


def _hours(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError("hours must be non-negative")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


# -- cycles -------------------------------------------------------------------


def cmd_cycles(args) -> int:
    mode = "strict_chain" if args.strict_chain else "lenient"
    graph, report = _load_graph(args, mode)
    cycles = cycle_table(graph, args.min_hops, args.appreciating_only, args.threads)
    out = Path(args.out)
    meta = {
        "tool": "nftcycles",
        "version": __version__,
        "command": "cycles",
        "pairing_rule": PAIRING_RULE,
        "ordering_key": list(ORDERING_KEY),
        "min_hops": args.min_hops,
        "mode": mode,
        "appreciating_only": args.appreciating_only,
        "format": args.format,
        "strict": args.strict,
        "input_digest": file_digest(args.input),
        "ingest": report.as_dict(),
        "graph": graph_stats(graph),
        "cycle_count": len(cycles),
    }
    atomic_write(out, lambda fh: write_cycles_csv(cycles, fh))
    _write_json(out.with_name(out.name + ".meta.json"), meta)
    print(f"{len(cycles)} cycles over {len(graph.nfts)} NFTs -> {out}")
    return EXIT_OK


# -- report -------------------------------------------------------------------


_UNSAFE = re.compile(r"[^A-Za-z0-9._-]")


def timing_filename(wallet: str) -> str:
    return f"timing_{_UNSAFE.sub('_', wallet)}.csv"


def _check_cycles_against_graph(cycles, graph) -> None:
    for c in cycles:
        path = graph.nfts.get(c.nft_id)
        if path is None or c.end_index >= len(path):
            raise _Fatal(f"cycle on {c.nft_id!r} does not match the input trades")
        first, last = path.entries[c.start_index], path.entries[c.end_index]
        if (first.tx_id, last.tx_id) != (c.start_tx, c.end_tx) or first.buyer != c.wallet:
            raise _Fatal(f"cycle {c.start_tx}->{c.end_tx} does not match the input trades")


def cmd_report(args) -> int:
    try:
        band_lo = an.hours_to_seconds(args.band_lo_hours)
        band_hi = an.hours_to_seconds(args.band_hi_hours)
        window = an.hours_to_seconds(args.window_hours)
        if band_lo >= band_hi:
            raise an.ConfigError("--band-lo-hours must be below --band-hi-hours")
        if args.low_max >= args.mid_max:
            raise an.ConfigError("--low-max must be below --mid-max")
        if window <= 0:
            raise an.ConfigError("--window-hours must be positive")
    except an.ConfigError as exc:
        raise _Fatal(str(exc), EXIT_USAGE) from None

    cycles_path = Path(args.cycles)
    if not cycles_path.is_file():
        raise _Fatal(f"cycles file not found: {cycles_path}")
    try:
        with open(cycles_path, encoding="utf-8", newline="") as fh:
            cycles = read_cycles_csv(fh)
    except (CycleFileError, UnicodeDecodeError) as exc:
        raise _Fatal(f"malformed cycles file: {exc}") from None
    mode = "strict_chain" if args.strict_chain else "lenient"
    graph, _ = _load_graph(args, mode)
    _check_cycles_against_graph(cycles, graph)

    profiles = an.trader_profiles(
        cycles,
        graph,
        low_max=args.low_max,
        mid_max=args.mid_max,
        band_lo=band_lo,
        band_hi=band_hi,
        delta_scope=args.delta_scope,
    )
    tiers = an.classify_tiers(profiles, args.low_max, args.mid_max)
    scores = an.suspicion_scores(
        profiles,
        an.SuspicionConfig(args.min_cycles, args.min_band_fraction, args.max_counterparties),
    )
    tables = an.plot_tables(cycles)
    by_wallet = an.group_by_wallet(cycles)

    def deltas_for(wallet):
        if args.delta_scope == "cycle":
            return an.inter_purchase_deltas(by_wallet[wallet], graph)
        return an.wallet_purchase_deltas(wallet, graph)

    whales = [p.wallet for p in profiles if p.tier == "whale"]
    timing = {w: deltas_for(w) for w in whales}

    out = Path(args.out)
    atomic_write(out / "traders.csv", lambda fh: an.write_traders_csv(profiles, fh))
    atomic_write(out / "tiers.csv", lambda fh: an.write_tiers_csv(tiers, fh))
    for w, deltas in timing.items():
        atomic_write(out / timing_filename(w), lambda fh, d=deltas: an.write_timing_csv(d, fh))
    atomic_write(
        out / "duration_vs_hops.csv",
        lambda fh: an.write_plot_csv(tables["duration_vs_hops"], "hop_length", fh),
    )
    atomic_write(
        out / "duration_vs_appreciation.csv",
        lambda fh: an.write_plot_csv(tables["duration_vs_appreciation"], "appreciation_usd", fh),
    )
    atomic_write(out / "suspicion.csv", lambda fh: an.write_suspicion_csv(scores, fh))
    _write_json(
        out / "report.meta.json",
        {
            "tool": "nftcycles",
            "version": __version__,
            "command": "report",
            "cycles_digest": file_digest(cycles_path),
            "input_digest": file_digest(args.input),
            "mode": mode,
            "tier_thresholds": {"low_max": args.low_max, "mid_max": args.mid_max},
            "band_seconds": [str(band_lo), str(band_hi)],
            "delta_scope": args.delta_scope,
            "mean_appreciation_formula": an.MEAN_APPRECIATION_FORMULA,
            "suspicion": {
                "min_cycles": args.min_cycles,
                "min_band_fraction": args.min_band_fraction,
                "max_counterparties": args.max_counterparties,
                "score": "mean of met criteria",
            },
            "timing_files": sorted(timing_filename(w) for w in timing),
        },
    )

    print(f"traders: {len(profiles)}  cycles: {len(cycles)}")
    print(tiers.summary_line())
    for s in scores[: args.top]:
        line = f"  {s.wallet}  score={s.score:.4f}  flags={'|'.join(s.flags) or '-'}"
        deltas = deltas_for(s.wallet)
        if deltas:
            lo, hi, cov = an.dominant_band(deltas, window, 60)
            line += f"  band={lo / 3600:.2f}h-{hi / 3600:.2f}h ({cov:.1%})"
        print(line)
    return EXIT_OK


# -- simulate -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    ring = RingSpec(
        ring_size=args.ring_size,
        nft_count=args.ring_nfts,
        traversal_count=args.traversals,
        period_seconds=int(an.hours_to_seconds(args.period_hours)),
        jitter_seconds=int(an.hours_to_seconds(args.jitter_hours)),
        price_step_usd=args.price_step_micro,
        band_hit_ratio=args.band_hit_ratio,
    )
    cfg = SynthConfig(
        n_wallets=args.wallets,
        n_nfts=args.nfts,
        n_background_trades=args.trades,
        rings=(ring,) * args.rings,
        seed=args.seed,
        allow_buyer_reuse=args.allow_buyer_reuse,
        case_variants=args.case_variants,
        corrupt_rows=args.corrupt_rows,
    )
    try:
        corpus = generate(cfg)
    except SynthConfigError as exc:
        raise _Fatal(str(exc), EXIT_USAGE) from None
    out = Path(args.out)
    atomic_write(out / "trades.csv", lambda fh: write_trades(corpus, fh))
    atomic_write(out / "labels.csv", lambda fh: write_labels(corpus.truth, fh))
    atomic_write(out / "synth.meta.json", lambda fh: write_meta(corpus, fh))
    print(f"{corpus.meta['trades']} trades, {corpus.meta['nfts']} NFTs -> {out / 'trades.csv'}")
    print(f"trades digest {file_digest(out / 'trades.csv')}")
    print(f"labels digest {file_digest(out / 'labels.csv')}")
    return EXIT_OK


# -- verify -------------------------------------------------------------------


def verify_instances(seeds: int, max_trades: int, base_seed: int = 0, max_wallets: int = 12, max_nfts: int = 5):
    """Compare fast path and oracle; returns the first mismatch or None."""
    for s in range(base_seed, base_seed + seeds):
        records = random_instance(s, max_wallets, max_nfts, max_trades)
        for mode in ("lenient", "strict_chain"):
            graph = build_graph(records, mode)
            for min_hops in (1, 2):
                fast = {c.key for c in cycle_table(graph, min_hops)}
                slow = brute_force_cycles(records, min_hops, strict_chain=mode == "strict_chain")
                if fast != slow:
                    return {
                        "seed": s,
                        "mode": mode,
                        "min_hops": min_hops,
                        "only_fast": sorted(fast - slow),
                        "only_oracle": sorted(slow - fast),
                        "records": [r._asdict() for r in records],
                    }
    return None


def cmd_verify(args) -> int:
    mismatch = verify_instances(args.seeds, args.max_trades, args.seed, args.max_wallets, args.max_nfts)
    if mismatch is None:
        print(f"verify: {args.seeds} instances, fast path and oracle agree")
        return EXIT_OK
    print("verify: MISMATCH", file=sys.stderr)
    print(json.dumps(mismatch, indent=2), file=sys.stderr)
    return EXIT_FATAL


# -- stats --------------------------------------------------------------------


def cmd_stats(args) -> int:
    mode = "strict_chain" if args.strict_chain else "lenient"
    graph, report = _load_graph(args, mode)
    print(json.dumps({"ingest": report.as_dict(), "graph": graph_stats(graph)}, indent=2))
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="trade file (CSV or JSONL)")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--strict", action="store_true", help="treat any rejected row as fatal")
    p.add_argument(
        "--strict-chain",
        action="store_true",
        help="split ownership paths at chain breaks (seller differs from previous buyer)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nftcycles",
        description="Time-respecting ownership cycles and trader analytics for NFT trades.",
        allow_abbrev=False,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cycles", help="extract cycles to cycles.csv", allow_abbrev=False)
    _input_flags(p)
    p.add_argument("--out", default="cycles.csv")
    p.add_argument("--min-hops", type=_positive_int, default=DEFAULT_MIN_HOPS)
    p.add_argument("--appreciating-only", action="store_true")
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_cycles)

    p = sub.add_parser("report", help="trader, tier, timing, plot and suspicion reports", allow_abbrev=False)
    _input_flags(p)
    p.add_argument("--cycles", required=True, help="cycles.csv produced by the cycles command")
    p.add_argument("--out", default="report", help="output directory")
    p.add_argument("--low-max", type=int, default=4)
    p.add_argument("--mid-max", type=int, default=14)
    p.add_argument("--band-lo-hours", type=_hours, default=3.4)
    p.add_argument("--band-hi-hours", type=_hours, default=4.6)
    p.add_argument("--window-hours", type=_hours, default=1.2)
    p.add_argument("--delta-scope", choices=an.DELTA_SCOPES, default="cycle",
                   help="cycle: gaps inside cycles; wallet: gaps between all of a wallet's purchases")
    p.add_argument("--min-cycles", type=int, default=15)
    p.add_argument("--min-band-fraction", type=float, default=0.88)
    p.add_argument("--max-counterparties", type=int, default=20)
    p.add_argument("--top", type=int, default=5, help="suspicion rows in the summary")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simulate", help="generate a labelled synthetic corpus", allow_abbrev=False)
    p.add_argument("--out", default="synthetic", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trades", type=int, default=10_000, help="background trades")
    p.add_argument("--nfts", type=_positive_int, default=100, help="background NFTs")
    p.add_argument("--wallets", type=_positive_int, default=1000, help="background wallets")
    p.add_argument("--rings", type=int, default=1)
    p.add_argument("--ring-size", type=int, default=20)
    p.add_argument("--ring-nfts", type=int, default=3)
    p.add_argument("--traversals", type=int, default=21)
    p.add_argument("--period-hours", type=_hours, default=4.0)
    p.add_argument("--jitter-hours", type=_hours, default=0.5)
    p.add_argument("--band-hit-ratio", type=float, default=0.88)
    p.add_argument("--price-step-micro", type=int, default=50_000, help="ring price drift per trade, micro-USD")
    p.add_argument("--allow-buyer-reuse", action="store_true")
    p.add_argument("--case-variants", action="store_true")
    p.add_argument("--corrupt-rows", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="fast path vs brute-force oracle on random instances", allow_abbrev=False)
    p.add_argument("--seeds", type=_positive_int, default=200)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--max-trades", type=int, default=60)
    p.add_argument("--max-wallets", type=_positive_int, default=12)
    p.add_argument("--max-nfts", type=_positive_int, default=5)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("stats", help="graph statistics for a trade file", allow_abbrev=False)
    _input_flags(p)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Fatal as exc:
        _err(str(exc))
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
