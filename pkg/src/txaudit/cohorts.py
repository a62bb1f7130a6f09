"""Transaction cohorts and the block counts the prioritization tests consume."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .model import Dataset
from .positions import EmptyCohortError


@dataclass(frozen=True)
class Cohort:
    name: str
    txids: frozenset
    description: str = ""


@dataclass(frozen=True)
class CohortCounts:
    miner: str
    x: int
    y: int
    theta0: Fraction


@dataclass(frozen=True)
class MinerWallets:
    wallets: dict
    # address -> labels, only for addresses used by more than one label
    shared: dict = field(default_factory=dict)


def extract_miner_wallets(ds: Dataset) -> MinerWallets:
    """Collect each miner label's coinbase reward addresses."""
    wallets = {}
    users = {}
    for b in ds.blocks:
        bucket = wallets.setdefault(b.miner_id, set())
        for addr in b.coinbase_addresses:
            bucket.add(addr)
            users.setdefault(addr, set()).add(b.miner_id)
    shared = {a: frozenset(m) for a, m in sorted(users.items()) if len(m) > 1}
    return MinerWallets({m: frozenset(a) for m, a in sorted(wallets.items())}, shared)


def self_interest_txs(ds: Dataset, miner: str,
                      wallets: Optional[MinerWallets] = None) -> Cohort:
    """Transactions sending coins from or to ``miner``'s reward addresses.

    An input counts as spending from the wallet only when the output it
    references is present in the dataset and pays a wallet address.
    """
    if wallets is None:
        wallets = extract_miner_wallets(ds)
    owned = wallets.wallets.get(miner, frozenset())
    index = ds.tx
    members = set()
    for tx in ds.transactions:
        if tx.is_coinbase:
            continue
        if any(o.address in owned for o in tx.outputs):
            members.add(tx.txid)
            continue
        for ref in tx.inputs:
            src = index.get(ref.txid)
            if src is not None and ref.vout < len(src.outputs) \
                    and src.outputs[ref.vout].address in owned:
                members.add(tx.txid)
                break
    return Cohort(f"self-interest:{miner}", frozenset(members),
                  f"transactions spending from or paying to {len(owned)} {miner} address(es)")


def _window_blocks(ds: Dataset, window):
    if window is None:
        return ds.blocks
    lo, hi = window
    blocks = [b for b in ds.blocks if lo <= b.height <= hi]
    if not blocks:
        raise ValueError(f"no blocks in height window [{lo}, {hi}]")
    return blocks


def hash_rate(ds: Dataset, miner: str, window=None) -> Fraction:
    """Share of blocks mined by ``miner``, optionally within an inclusive height range."""
    blocks = _window_blocks(ds, window)
    if not blocks:
        raise ValueError("dataset has no blocks")
    return Fraction(sum(b.miner_id == miner for b in blocks), len(blocks))


def cohort_counts(cohort, ds: Dataset, miner: str, window=None,
                  theta0=None) -> CohortCounts:
    """c-block counts for ``miner``: x of the y blocks holding a cohort member.

    ``theta0`` defaults to the miner's block share over the same window.
    """
    txids = cohort.txids if isinstance(cohort, Cohort) else frozenset(cohort)
    blocks = _window_blocks(ds, window)
    x = y = 0
    for b in blocks:
        if not txids.isdisjoint(b.tx_order):
            y += 1
            x += b.miner_id == miner
    if y == 0:
        raise EmptyCohortError("cohort has no transaction in the selected blocks")
    if theta0 is None:
        theta0 = hash_rate(ds, miner, window)
    return CohortCounts(miner, x, y, Fraction(theta0))
