"""Mempool congestion, commit delays and fee revenue."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional

from .model import Block, Dataset, Transaction

MB = 1_000_000


@dataclass(frozen=True)
class CongestionBin:
    label: str
    lower: int                # exclusive, vbytes
    upper: Optional[int]      # inclusive, vbytes; None = unbounded


NO_CONGESTION = CongestionBin("none", -1, MB)
LOW = CongestionBin("low", MB, 2 * MB)
MEDIUM = CongestionBin("medium", 2 * MB, 4 * MB)
HIGH = CongestionBin("high", 4 * MB, None)
BINS = (NO_CONGESTION, LOW, MEDIUM, HIGH)


def congestion_bin(total_vbytes: int) -> CongestionBin:
    """Bin a mempool size; intervals are right-closed: (1, 2] MB is "low"."""
    if total_vbytes < 0:
        raise ValueError("mempool size must be non-negative")
    for b in BINS[:-1]:
        if total_vbytes <= b.upper:
            return b
    return HIGH


class MempoolPoint(NamedTuple):
    timestamp: int
    vbytes: int
    tx_count: int


def mempool_size_series(ds: Dataset) -> list:
    index = ds.tx
    out = []
    for s in sorted(ds.snapshots, key=lambda s: s.timestamp):
        members = [index[t] for t in s.txids if t in index]
        out.append(MempoolPoint(s.timestamp, sum(t.vsize for t in members), len(members)))
    return out


class PendingTransaction(Exception):
    """The transaction has no committing block yet."""

    def __init__(self, txid: str, blocks_elapsed: int):
        super().__init__(f"{txid} is pending after {blocks_elapsed} block(s)")
        self.txid = txid
        self.blocks_elapsed = blocks_elapsed


def _raw_delay(tx: Transaction, ds: Dataset) -> int:
    if tx.arrival_time is None:
        raise ValueError(f"{tx.txid} has no arrival time")
    stamps = [b.timestamp for b in ds.blocks]
    first = bisect.bisect_left(stamps, tx.arrival_time)
    ci = ds.commit_index.get(tx.txid)
    if ci is None:
        raise PendingTransaction(tx.txid, len(stamps) - first)
    return ci - first + 1


def commit_delay(tx: Transaction, ds: Dataset) -> int:
    """Blocks from arrival to commitment, counting the committing block.

    Inclusion in the first block stamped at or after arrival is a delay of
    1.  Arrivals stamped after their own block are clamped to 1.
    """
    return max(1, _raw_delay(tx, ds))


@dataclass(frozen=True)
class DelayReport:
    rows: list        # (txid, fee rate, delay) in chain order
    clamped: int
    pending: int
    no_arrival: int


def delay_report(ds: Dataset) -> DelayReport:
    stamps = [b.timestamp for b in ds.blocks]
    commit = ds.commit_index
    index = ds.tx
    rows = []
    clamped = pending = no_arrival = 0
    seen = set()
    for b in ds.blocks:
        for txid in b.tx_order:
            tx = index.get(txid)
            if tx is None or txid in seen:
                continue
            seen.add(txid)
            if tx.arrival_time is None:
                no_arrival += 1
                continue
            raw = commit[txid] - bisect.bisect_left(stamps, tx.arrival_time) + 1
            if raw < 1:
                clamped += 1
            rows.append((txid, tx.fee_rate, max(1, raw)))
    pending = sum(1 for t in ds.transactions
                  if t.txid not in commit and not t.is_coinbase and t.arrival_time is not None)
    return DelayReport(rows, clamped, pending, no_arrival)


def block_subsidy(height: int) -> int:
    """Bitcoin block subsidy in satoshi."""
    halvings = height // 210_000
    if halvings >= 64:
        return 0
    return (50 * 100_000_000) >> halvings


def fee_revenue_share(block: Block, ds: Dataset, subsidy=block_subsidy) -> Fraction:
    """Transaction fees as a percentage of the block's total miner revenue."""
    index = ds.tx
    fees = sum(index[t].fee for t in block.tx_order if t in index)
    total = fees + subsidy(block.height)
    if total == 0:
        return Fraction(0)
    return Fraction(100 * fees, total)


@dataclass(frozen=True)
class FeeRateSummary:
    count: int
    mean: Fraction
    minimum: Fraction
    q1: Fraction
    median: Fraction
    q3: Fraction
    maximum: Fraction


def nearest_rank(sorted_values, q: Fraction):
    """Nearest-rank quantile: the ceil(q*n)-th smallest value (1-based, min 1)."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("no values")
    rank = max(1, math.ceil(Fraction(q) * n))
    return sorted_values[rank - 1]


def summarize(values) -> FeeRateSummary:
    v = sorted(values)
    return FeeRateSummary(
        len(v), sum(v, Fraction(0)) / len(v), v[0],
        nearest_rank(v, Fraction(1, 4)), nearest_rank(v, Fraction(1, 2)),
        nearest_rank(v, Fraction(3, 4)), v[-1],
    )


def feerate_by_congestion(ds: Dataset):
    """Fee-rate summaries per congestion bin.

    Each transaction gets the bin of the latest snapshot at or before its
    arrival.  Returns (label -> FeeRateSummary for populated bins, number of
    transactions without a covering snapshot or arrival time).
    """
    series = mempool_size_series(ds)
    stamps = [p.timestamp for p in series]
    labels = [congestion_bin(p.vbytes).label for p in series]
    groups = {}
    excluded = 0
    for tx in ds.transactions:
        if tx.is_coinbase:
            continue
        if tx.arrival_time is None:
            excluded += 1
            continue
        i = bisect.bisect_right(stamps, tx.arrival_time) - 1
        if i < 0:
            excluded += 1
            continue
        groups.setdefault(labels[i], []).append(tx.fee_rate)
    summaries = {b.label: summarize(groups[b.label]) for b in BINS if b.label in groups}
    return summaries, excluded
