"""Position prediction errors.

Positions are percentile ranks within a block's eligible (non-CPFP,
non-coinbase) transactions: the first transaction sits at 0 and the last
at 100.  PPE is the mean absolute gap between fee-rate-predicted and
observed rank in one block; SPPE is the mean signed gap (predicted minus
observed) over a cohort, so a large positive value means the cohort was
placed well ahead of what its public fee rate earns.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import Block, Dataset
from .norms import eligible_txids


class EmptyBlockError(ValueError):
    """The block has no eligible transactions to rank."""


class EmptyCohortError(ValueError):
    """No cohort transaction was found in the requested blocks."""


@dataclass(frozen=True)
class PositionReport:
    txid: str
    block_height: int
    predicted_rank: Fraction
    observed_rank: Fraction

    @property
    def signed_error(self) -> Fraction:
        return self.predicted_rank - self.observed_rank


def percentile_rank(index: int, n: int) -> Fraction:
    """Percentile rank of 1-based ``index`` among ``n`` positions."""
    if not 1 <= index <= n:
        raise ValueError(f"index {index} out of range for n={n}")
    if n == 1:
        return Fraction(0)
    return Fraction(100 * (index - 1), n - 1)


def _block_indices(block: Block, ds: Dataset):
    """Eligible txids in observed order and their 0-based predicted indices."""
    observed = eligible_txids(block, ds)
    keys = ds.rate_key
    ranked = sorted(range(len(observed)), key=lambda i: -keys[observed[i]])
    predicted = [0] * len(observed)
    for p, i in enumerate(ranked):
        predicted[i] = p
    return observed, predicted


def position_reports(block: Block, ds: Dataset) -> list:
    observed, predicted = _block_indices(block, ds)
    n = len(observed)
    return [
        PositionReport(txid, block.height,
                       percentile_rank(p + 1, n), percentile_rank(o + 1, n))
        for o, (txid, p) in enumerate(zip(observed, predicted))
    ]


def ppe(block: Block, ds: Dataset) -> Fraction:
    """Mean absolute percentile-rank displacement of a block, in [0, 100]."""
    observed, predicted = _block_indices(block, ds)
    n = len(observed)
    if n == 0:
        raise EmptyBlockError(f"block {block.height} has no eligible transactions")
    if n == 1:
        return Fraction(0)
    total = sum(abs(p - o) for o, p in enumerate(predicted))
    return Fraction(100 * total, n * (n - 1))


def ppe_report(ds: Dataset) -> list:
    """(height, miner, n_eligible, ppe) for every block with eligible transactions."""
    rows = []
    for b in ds.blocks:
        try:
            value = ppe(b, ds)
        except EmptyBlockError:
            continue
        rows.append((b.height, b.miner_id, len(eligible_txids(b, ds)), value))
    return rows


def cohort_signed_errors(c_txids, miner: str, ds: Dataset) -> dict:
    """txid -> signed error for cohort members ranked in blocks mined by ``miner``."""
    c_txids = set(c_txids)
    out = {}
    for b in ds.blocks:
        if b.miner_id != miner or c_txids.isdisjoint(b.tx_order):
            continue
        observed, predicted = _block_indices(b, ds)
        n = len(observed)
        for o, txid in enumerate(observed):
            if txid in c_txids:
                out[txid] = percentile_rank(predicted[o] + 1, n) - percentile_rank(o + 1, n)
    return out


def sppe(c_txids, miner: str, ds: Dataset) -> Fraction:
    """Mean signed position error of a cohort within ``miner``'s blocks."""
    errors = cohort_signed_errors(c_txids, miner, ds)
    if not errors:
        raise EmptyCohortError(f"no cohort transactions for miner {miner!r}")
    return sum(errors.values(), Fraction(0)) / len(errors)


# -- dataset-wide table -----------------------------------------------------

@dataclass(frozen=True)
class PositionTable:
    """Columnar per-transaction positions for every block of a dataset."""

    txids: list
    block: np.ndarray      # index into ds.blocks
    observed: np.ndarray   # 0-based observed index among eligible members
    predicted: np.ndarray  # 0-based fee-rate-predicted index
    size: np.ndarray       # eligible member count of the block


_tables = weakref.WeakKeyDictionary()


def position_table(ds: Dataset) -> PositionTable:
    table = _tables.get(ds)
    if table is not None:
        return table
    skip = ds.cpfp_txids | ds.coinbase_txids
    index = ds.tx
    keys = ds.rate_key
    has = index.__contains__
    txids, lengths = [], []
    for b in ds.blocks:
        order = b.tx_order
        if all(map(has, order)) and (not skip or skip.isdisjoint(order)):
            txids.extend(order)
            lengths.append(len(order))
            continue
        kept = [t for t in order if t in index and t not in skip]
        txids.extend(kept)
        lengths.append(len(kept))
    sizes = np.asarray(lengths, dtype=np.int64)
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(np.int64)
    blk = np.repeat(np.arange(len(sizes), dtype=np.int64), sizes)
    obs = np.arange(len(txids), dtype=np.int64) - starts[blk]
    key = np.array(list(map(keys.__getitem__, txids)), dtype=np.int64)
    order = np.lexsort((obs, -key, blk))
    pred = np.empty_like(obs)
    pred[order] = np.arange(order.size) - starts[blk[order]]
    table = PositionTable(txids, blk, obs, pred, sizes[blk])
    _tables[ds] = table
    return table


def flag_accelerated(ds: Dataset, sppe_threshold=99) -> dict:
    """Transactions whose own signed position error is at least the threshold.

    Returns txid -> signed error, in chain order.
    """
    threshold = Fraction(sppe_threshold)
    if not 0 <= threshold <= 100:
        raise ValueError("threshold must lie in [0, 100]")
    t = position_table(ds)
    if not t.txids:
        return {}
    diff = t.predicted - t.observed
    span = t.size - 1
    # 100*diff/span >= num/den, in integers
    hit = (100 * diff * threshold.denominator >= threshold.numerator * span) & (span > 0)
    if threshold == 0:
        hit |= span == 0
    out = {}
    for i in np.flatnonzero(hit):
        s = int(span[i])
        out[t.txids[i]] = Fraction(100 * int(diff[i]), s) if s else Fraction(0)
    return out
