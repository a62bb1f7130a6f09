"""Fee-rate prioritization norms and checks against them.

Three norms are modelled: miners select and order transactions by
descending fee rate, and ignore transactions under a minimum fee rate.
Child-pays-for-parent (CPFP) transactions legitimately break the ordering
rule and are identified so callers can set them aside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import Block, Dataset, MempoolSnapshot

DEFAULT_MIN_FEERATE = Fraction(1)  # sat/vB, i.e. 1e-5 BTC/kB


@dataclass(frozen=True)
class PredictedOrdering:
    block_height: int
    ranked_txids: tuple
    excluded_cpfp: frozenset


@dataclass(frozen=True)
class ViolationPair:
    earlier_txid: str
    later_txid: str
    earlier_feerate: Fraction
    later_feerate: Fraction
    earlier_block: int
    later_block: int


@dataclass(frozen=True)
class ViolationReport:
    snapshot_ts: int
    epsilon: float
    pairs: tuple
    pairs_total: int
    uncommitted: int
    no_arrival: int = 0

    @property
    def pairs_violating(self) -> int:
        return len(self.pairs)

    @property
    def fraction(self) -> Fraction:
        if self.pairs_total == 0:
            return Fraction(0)
        return Fraction(self.pairs_violating, self.pairs_total)


def detect_cpfp(block: Block, ds: Dataset) -> frozenset:
    """Members of ``block`` spending an output of another member of the same block."""
    members = set(block.tx_order)
    index = ds.tx
    out = set()
    for txid in block.tx_order:
        tx = index.get(txid)
        if tx is None or not tx.inputs:
            continue
        for ref in tx.inputs:
            if ref.txid in members:
                out.add(txid)
                break
    return frozenset(out)


def eligible_txids(block: Block, ds: Dataset, cpfp=None) -> list:
    """Observed-order members that take part in ordering metrics.

    Drops CPFP children, coinbase-flagged transactions and ids that do not
    resolve in the dataset.
    """
    if cpfp is None:
        cpfp = detect_cpfp(block, ds)
    index = ds.tx
    out = []
    for txid in block.tx_order:
        tx = index.get(txid)
        if tx is None or tx.is_coinbase or txid in cpfp:
            continue
        out.append(txid)
    return out


def predicted_order(block: Block, ds: Dataset) -> PredictedOrdering:
    cpfp = detect_cpfp(block, ds)
    observed = eligible_txids(block, ds, cpfp)
    index = ds.tx
    # equal rates keep their mined order (stable sort on the exact rate)
    ranked = sorted(observed, key=lambda t: index[t].fee_rate, reverse=True)
    return PredictedOrdering(block.height, tuple(ranked), cpfp)


def min_feerate_filter(txs, threshold=DEFAULT_MIN_FEERATE):
    """Split ``txs`` into (accepted, rejected) at an inclusive fee-rate threshold."""
    threshold = Fraction(threshold)
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    accepted, rejected = set(), set()
    for tx in txs:
        # fee/vsize >= num/den  <=>  fee*den >= num*vsize
        if tx.fee * threshold.denominator >= threshold.numerator * tx.vsize:
            accepted.add(tx)
        else:
            rejected.add(tx)
    return frozenset(accepted), frozenset(rejected)


def find_violation_pairs(snapshot: MempoolSnapshot, ds: Dataset, epsilon=0,
                         exclude_cpfp: bool = True) -> ViolationReport:
    """Pairs of snapshot members mined against fee-rate selection.

    A pair (i, j) is a candidate when i arrived more than ``epsilon``
    seconds before j and pays a strictly higher fee rate; it is a violation
    when j was nevertheless committed in an earlier block than i.
    Members never committed, or lacking an arrival time, are skipped and
    counted.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    index = ds.tx
    commit = ds.commit_index
    skip = ds.cpfp_txids if exclude_cpfp else frozenset()
    keys = ds.rate_key

    uncommitted = no_arrival = 0
    members = []
    for txid in sorted(snapshot.txids):
        tx = index.get(txid)
        if tx is None:
            continue
        if tx.arrival_time is None:
            no_arrival += 1
            continue
        bi = commit.get(txid)
        if bi is None:
            uncommitted += 1
            continue
        if txid in skip:
            continue
        members.append((txid, tx.arrival_time, keys[txid], ds.blocks[bi].height))

    pairs = []
    total = 0
    if members and not math.isinf(epsilon):
        t = np.array([m[1] for m in members], dtype=np.int64)
        k = np.array([m[2] for m in members], dtype=np.int64)
        h = np.array([m[3] for m in members], dtype=np.int64)
        for i, (txid_i, t_i, k_i, h_i) in enumerate(members):
            cand = (t > t_i + epsilon) & (k < k_i)
            total += int(cand.sum())
            for j in np.flatnonzero(cand & (h < h_i)):
                txid_j = members[j][0]
                pairs.append(ViolationPair(
                    txid_i, txid_j, index[txid_i].fee_rate, index[txid_j].fee_rate,
                    int(h_i), int(h[j])))
    pairs.sort(key=lambda p: (p.earlier_txid, p.later_txid))
    return ViolationReport(snapshot.timestamp, epsilon, tuple(pairs), total,
                           uncommitted, no_arrival)
