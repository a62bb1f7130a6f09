from fractions import Fraction
from pathlib import Path

import pytest

from txaudit.model import Block, Dataset, MempoolSnapshot, Transaction

FIXTURES = Path(__file__).parent / "fixtures"


def tx(txid, fee, vsize=100, arrival=None, inputs=(), outputs=(), coinbase=False):
    return Transaction(txid, vsize, fee, arrival, inputs, outputs, coinbase)


def block(height, txids, miner="M", ts=None, addrs=(), cap=1_000_000):
    return Block(height, f"h{height}", miner, 1000 + 600 * height if ts is None else ts,
                 tuple(txids), tuple(addrs), cap)


def block_from_rates(rates, height=0, miner="M", prefix="t"):
    """Dataset with one block whose members have the given fee rates in mined order."""
    txs = []
    for i, r in enumerate(rates):
        r = Fraction(r)
        # vsize chosen so fee is an integer for any rate with denominator <= 100
        txs.append(tx(f"{prefix}{i}", int(r * 100 * r.denominator), 100 * r.denominator))
    return Dataset(txs, [block(height, [t.txid for t in txs], miner)])


def snapshot(ts, txids):
    return MempoolSnapshot(ts, frozenset(txids))


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    acceptance = __import__("sys").modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        terminalreporter.write_line(
            acceptance.RESULTS.get(n, f"criterion {n:2d}: NOT RUN (deselected or errored before verdict)"))
