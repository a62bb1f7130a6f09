"""Core data types shared by every audit module.

Amounts are integer satoshi, sizes are integer vbytes and fee rates are
exact :class:`fractions.Fraction` values, so ordering never depends on
floating point ties.
"""

from __future__ import annotations

import gc
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

UNKNOWN_MINER = "Unknown"
DEFAULT_MAX_VSIZE = 1_000_000

# 1 sat/vB == 1e-5 BTC/kB
SAT_PER_VB_IN_BTC_PER_KB = Fraction(1, 100_000)


class TxIn(NamedTuple):
    txid: str
    vout: int


class TxOut(NamedTuple):
    address: str
    value: int


class _TransactionFields(NamedTuple):
    txid: str
    vsize: int
    fee: int
    arrival_time: Optional[int] = None
    inputs: tuple = ()
    outputs: tuple = ()
    is_coinbase: bool = False


class Transaction(_TransactionFields):
    """A fee-bearing transaction.

    The constructor validates its arguments.  ``Transaction._make`` skips
    validation and is meant for bulk construction from trusted arrays.
    """

    __slots__ = ()

    def __new__(cls, txid, vsize, fee, arrival_time=None, inputs=(), outputs=(),
                is_coinbase=False):
        if not isinstance(txid, str) or not txid:
            raise ValueError("txid must be a non-empty string")
        if int(vsize) < 1:
            raise ValueError(f"{txid}: vsize must be >= 1, got {vsize}")
        if int(fee) < 0:
            raise ValueError(f"{txid}: fee must be non-negative, got {fee}")
        ins = tuple(TxIn(str(t), int(v)) for t, v in inputs)
        for ref in ins:
            if ref.vout < 0:
                raise ValueError(f"{txid}: negative output index in input {ref.txid}")
        outs = tuple(TxOut(str(a), int(v)) for a, v in outputs)
        for out in outs:
            if out.value < 0:
                raise ValueError(f"{txid}: negative output value")
        return super().__new__(
            cls, txid, int(vsize), int(fee),
            None if arrival_time is None else int(arrival_time),
            ins, outs, bool(is_coinbase),
        )

    @property
    def fee_rate(self) -> Fraction:
        return Fraction(self.fee, self.vsize)


@contextmanager
def gc_paused():
    """Suspend cyclic GC while bulk-allocating many small immutable objects."""
    enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()


def fee_rate(tx: Transaction) -> Fraction:
    """Fee per virtual byte, in sat/vB, as an exact rational."""
    return Fraction(tx.fee, tx.vsize)


def vsize_from_weight(weight: int) -> int:
    """Virtual size in vbytes: ceil(weight / 4)."""
    if weight < 1:
        raise ValueError(f"weight must be >= 1, got {weight}")
    return -(-weight // 4)


@dataclass(frozen=True)
class Block:
    height: int
    block_hash: str
    miner_id: str
    timestamp: int
    tx_order: tuple
    coinbase_addresses: tuple = ()
    max_vsize: int = DEFAULT_MAX_VSIZE

    def __post_init__(self):
        if self.height < 0:
            raise ValueError(f"block height must be non-negative, got {self.height}")
        if self.max_vsize < 1:
            raise ValueError(f"block {self.height}: max_vsize must be positive")
        # normalise list inputs so blocks stay hashable
        object.__setattr__(self, "tx_order", tuple(self.tx_order))
        object.__setattr__(self, "coinbase_addresses", tuple(self.coinbase_addresses))


@dataclass(frozen=True)
class MempoolSnapshot:
    timestamp: int
    txids: frozenset

    def __post_init__(self):
        object.__setattr__(self, "txids", frozenset(self.txids))


class Violation(NamedTuple):
    kind: str
    identifier: str
    detail: str = ""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Transactions, blocks and mempool snapshots of one audit window.

    ``issues`` carries problems found while parsing (unreadable or invalid
    records); they are surfaced by :func:`validate_dataset`.
    """

    transactions: tuple = ()
    blocks: tuple = ()
    snapshots: tuple = ()
    issues: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "transactions", tuple(self.transactions))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "snapshots", tuple(self.snapshots))
        object.__setattr__(self, "issues", tuple(self.issues))

    @cached_property
    def tx(self) -> dict:
        # first occurrence wins
        return {t.txid: t for t in reversed(self.transactions)}

    @cached_property
    def commit_index(self) -> dict:
        """txid -> index into ``blocks`` of the first block committing it."""
        index = {}
        for i in range(len(self.blocks) - 1, -1, -1):
            index.update(dict.fromkeys(self.blocks[i].tx_order, i))
        return index

    @cached_property
    def rate_key(self) -> dict:
        """txid -> integer key whose order equals the exact fee-rate order."""
        txs = list(self.tx.values())
        if not txs:
            return {}
        fees = np.fromiter((t.fee for t in txs), dtype=np.int64, count=len(txs))
        sizes = np.fromiter((t.vsize for t in txs), dtype=np.int64, count=len(txs))
        keys = exact_rate_keys(fees, sizes)
        return dict(zip((t.txid for t in txs), keys.tolist()))

    @cached_property
    def coinbase_txids(self) -> frozenset:
        return frozenset(t.txid for t in self.transactions if t.is_coinbase)

    @cached_property
    def cpfp_txids(self) -> frozenset:
        """Committed transactions spending an output created in their own block."""
        commit = self.commit_index
        out = set()
        for t in self.transactions:
            if not t.inputs:
                continue
            home = commit.get(t.txid)
            if home is not None and any(commit.get(i.txid) == home for i in t.inputs):
                out.add(t.txid)
        return frozenset(out)

    def with_blocks(self, blocks) -> "Dataset":
        """Same transactions and snapshots with replaced blocks.

        Transaction-derived caches are carried over.
        """
        ds = Dataset(self.transactions, blocks, self.snapshots, self.issues)
        for name in ("tx", "rate_key"):
            if name in self.__dict__:
                ds.__dict__[name] = self.__dict__[name]
        return ds

    def committing_block(self, txid: str) -> Optional[Block]:
        i = self.commit_index.get(txid)
        return None if i is None else self.blocks[i]

    def miners(self) -> list:
        return sorted({b.miner_id for b in self.blocks})


def exact_rate_keys(fees: np.ndarray, vsizes: np.ndarray) -> np.ndarray:
    """Dense integer ranks (ascending) of fee/vsize under exact comparison.

    Correctly rounded division is monotone, so sorting by the float
    quotient is already right except between neighbours with equal floats;
    those are re-checked by integer cross-multiplication and, should two
    distinct rates ever share a float, the ranking falls back to an exact
    rational sort.
    """
    fees = np.asarray(fees, dtype=np.int64)
    vsizes = np.asarray(vsizes, dtype=np.int64)
    n = fees.size
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    approx = fees.astype(np.float64) / vsizes.astype(np.float64)
    order = np.argsort(approx, kind="stable")
    a = approx[order]
    tie = np.flatnonzero(a[1:] == a[:-1])
    if tie.size:
        lhs_i, rhs_i = order[tie], order[tie + 1]
        if int(fees.max()) * int(vsizes.max()) < 2**63:
            exact = fees[lhs_i] * vsizes[rhs_i] == fees[rhs_i] * vsizes[lhs_i]
        else:
            exact = np.array([int(fees[i]) * int(vsizes[j]) == int(fees[j]) * int(vsizes[i])
                              for i, j in zip(lhs_i, rhs_i)], dtype=bool)
        if not exact.all():
            return _exact_rate_keys_slow(fees, vsizes)
    step = np.concatenate(([0], (a[1:] != a[:-1]).astype(np.int64)))
    keys = np.empty(n, dtype=np.int64)
    keys[order] = np.cumsum(step)
    return keys


def _exact_rate_keys_slow(fees, vsizes) -> np.ndarray:
    rates = [Fraction(int(f), int(v)) for f, v in zip(fees, vsizes)]
    dense = {r: i for i, r in enumerate(sorted(set(rates)))}
    return np.array([dense[r] for r in rates], dtype=np.int64)


def validate_dataset(ds: Dataset) -> list:
    """Check type invariants and referential integrity.

    Returns violations sorted by (kind, identifier); an empty list means
    the dataset is consistent.  Nothing is raised.
    """
    found = list(ds.issues)

    seen = set()
    for t in ds.transactions:
        if t.txid in seen:
            found.append(Violation("duplicate-txid", t.txid))
        seen.add(t.txid)

    index = ds.tx
    prev_height = prev_ts = None
    for b in ds.blocks:
        bid = str(b.height)
        if prev_height is not None and b.height <= prev_height:
            found.append(Violation("height-order", bid, f"follows {prev_height}"))
        if prev_ts is not None and b.timestamp < prev_ts:
            found.append(Violation("timestamp-order", bid, f"{b.timestamp} < {prev_ts}"))
        prev_height, prev_ts = b.height, b.timestamp

        members = set()
        total = 0
        for txid in b.tx_order:
            if txid in members:
                found.append(Violation("duplicate-in-block", f"{bid}:{txid}"))
                continue
            members.add(txid)
            t = index.get(txid)
            if t is None:
                found.append(Violation("dangling-txid", txid, f"block {bid}"))
            else:
                total += t.vsize
        if total > b.max_vsize:
            found.append(Violation("block-overweight", bid, f"{total} > {b.max_vsize}"))

    prev_ts = None
    for s in ds.snapshots:
        if prev_ts is not None and s.timestamp < prev_ts:
            found.append(Violation("snapshot-order", str(s.timestamp)))
        prev_ts = s.timestamp
        for txid in sorted(s.txids - index.keys()):
            found.append(Violation("dangling-txid", txid, f"snapshot {s.timestamp}"))

    return sorted(set(found))
