import io

import pytest

from nftcycles.ingest import TradeRecord, write_trades_csv


def toy_records(spacing: int = 1) -> list[TradeRecord]:
    """NFT ``B`` bought by A, B, C, then A again in blocks 1..4.

    Sellers close the loop (C sold to A first), so the path has no chain
    breaks and only wallets A, B and C appear.
    """
    purchases = [("C", "A"), ("A", "B"), ("B", "C"), ("C", "A")]
    return [
        TradeRecord(f"tx{blk}", blk, blk * spacing, "B", "toy", seller, buyer, price)
        for blk, (seller, buyer), price in zip(
            range(1, 5), purchases, (10_000_000, 12_000_000, 13_000_000, 15_000_000)
        )
    ]


def to_csv(records) -> str:
    buf = io.StringIO()
    write_trades_csv(records, buf)
    return buf.getvalue()


@pytest.fixture
def toy():
    return toy_records()


@pytest.fixture
def toy_csv(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text(to_csv(toy_records()))
    return path


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
