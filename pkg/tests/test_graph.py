import io
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nftcycles.graph import (
    DuplicateTradeError,
    GraphError,
    UnknownNFTError,
    build_graph,
    graph_stats,
    iter_records,
    ownership_sequence,
)
from nftcycles.ingest import TradeRecord, parse_trades, write_trades_csv
from nftcycles.oracle import random_instance
from nftcycles.synth import RingSpec, SynthConfig, generate

from conftest import toy_records


def rec(tx, ts, buyer, seller="x", nft="n", block=0, price=0):
    return TradeRecord(tx, block, ts, nft, "", seller, buyer, price)


def test_toy_path(toy):
    g = build_graph(toy)
    path = ownership_sequence(g, "B")
    assert len(path) == 4
    assert path.buyers == ["A", "B", "C", "A"]
    assert path.chain_breaks == ()
    assert ownership_sequence(g, "B") is path


def test_toy_stats(toy):
    stats = graph_stats(build_graph(toy))
    assert stats == {
        "nft_count": 1,
        "wallet_count": 3,
        "trade_count": 4,
        "chain_break_count": 0,
        "time_range": (1, 4),
    }


def test_empty_graph():
    g = build_graph([])
    assert len(g.nfts) == 0 and len(g.wallets) == 0
    assert graph_stats(g) == {
        "nft_count": 0, "wallet_count": 0, "trade_count": 0, "chain_break_count": 0, "time_range": None,
    }


def test_block_breaks_timestamp_ties():
    g = build_graph([rec("a", 10, "X", block=7), rec("b", 10, "Y", block=5)])
    assert [e.block for e in ownership_sequence(g, "n").entries] == [5, 7]


def test_tx_id_breaks_remaining_ties():
    g = build_graph([rec("b", 10, "X"), rec("a", 10, "Y")])
    assert [e.tx_id for e in ownership_sequence(g, "n").entries] == ["a", "b"]


def test_single_trade_path():
    assert len(ownership_sequence(build_graph([rec("a", 1, "X")]), "n")) == 1


def test_unknown_nft():
    with pytest.raises(UnknownNFTError):
        ownership_sequence(build_graph([]), "nope")


def test_duplicate_trade_rejected():
    with pytest.raises(DuplicateTradeError) as exc:
        build_graph([rec("a", 1, "X"), rec("b", 2, "Y"), rec("a", 3, "Z")])
    assert (exc.value.nft_id, exc.value.tx_id) == ("n", "a")
    # the same tx id on different NFTs is fine
    build_graph([rec("a", 1, "X", nft="n1"), rec("a", 1, "X", nft="n2")])


def test_out_of_range_timestamp():
    with pytest.raises(GraphError):
        build_graph([rec("a", -1, "X")])


def test_chain_breaks_and_segments():
    trades = [
        rec("1", 1, "A", seller="M"),
        rec("2", 2, "B", seller="A"),
        rec("3", 3, "C", seller="Z"),  # off-market: Z never owned it
        rec("4", 4, "A", seller="C"),
        rec("5", 5, "D", seller=""),
    ]
    path = ownership_sequence(build_graph(trades), "n")
    assert path.chain_breaks == (2, 4)
    assert path.segments() == [(0, 2), (2, 4), (4, 5)]


def test_wallet_index_resolves(toy):
    g = build_graph(toy)
    assert g.wallets["A"] == (("B", 0), ("B", 3))
    for wallet, refs in g.wallets.items():
        for nft, k in refs:
            assert g.nfts[nft].entries[k].buyer == wallet


def test_graph_is_read_only(toy):
    g = build_graph(toy)
    with pytest.raises(TypeError):
        g.nfts["X"] = None
    with pytest.raises(AttributeError):
        g.trade_count = 0


def test_synthetic_ring_sequence_matches_emission_order():
    cfg = SynthConfig(n_background_trades=0, rings=(RingSpec(ring_size=5, traversal_count=10),), seed=3)
    corpus = generate(cfg)
    g = build_graph(random.Random(1).sample(corpus.records, len(corpus.records)))
    (nft,) = corpus.truth.ring_nfts
    assert len(ownership_sequence(g, nft)) == 50
    assert list(ownership_sequence(g, nft).entries) == [r for r in corpus.records if r.nft_id == nft]


def test_synthetic_stats_match_generator():
    cfg = SynthConfig(n_wallets=5000, n_nfts=200, n_background_trades=10_000, seed=9)
    corpus = generate(cfg)
    stats = graph_stats(build_graph(corpus.records))
    assert stats["trade_count"] == 10_000 == corpus.meta["trades"]
    assert stats["nft_count"] == corpus.meta["nfts"]
    assert stats["wallet_count"] == corpus.meta["buyers"]
    assert stats["chain_break_count"] == 0


def test_snapshot_rebuilds_identically():
    records = random_instance(4, max_trades=60)
    g = build_graph(records)
    buf = io.StringIO()
    write_trades_csv(iter_records(g), buf)
    parsed, _ = parse_trades(io.BytesIO(buf.getvalue().encode()))
    g2 = build_graph(parsed)
    assert dict(g2.nfts) == dict(g.nfts)


@given(st.integers(0, 10_000), st.randoms(use_true_random=False))
def test_shuffle_invariance(seed, rnd):
    records = random_instance(seed)
    shuffled = list(records)
    rnd.shuffle(shuffled)
    a, b = build_graph(records), build_graph(shuffled)
    assert dict(a.nfts) == dict(b.nfts)
    assert dict(a.wallets) == dict(b.wallets)


@given(st.integers(0, 10_000))
def test_conservation_and_ordering(seed):
    records = random_instance(seed)
    g = build_graph(records)
    assert sum(len(p) for p in g.nfts.values()) == g.trade_count == len(records)
    for path in g.nfts.values():
        keys = [(e.timestamp, e.block, e.tx_id) for e in path.entries]
        assert all(x < y for x, y in zip(keys, keys[1:]))
        assert list(path.chain_breaks) == [
            k for k in range(1, len(path)) if path.entries[k].seller != path.entries[k - 1].buyer
        ]


@given(st.integers(0, 10_000))
def test_segments_concatenate_to_path(seed):
    g = build_graph(random_instance(seed), "strict_chain")
    for path in g.nfts.values():
        joined = [e for lo, hi in path.segments() for e in path.entries[lo:hi]]
        assert joined == list(path.entries)
