"""Synthetic chains with known ground truth.

``generate`` produces a chain in which every miner follows the fee-rate
norms: Poisson arrivals, log-normal fee rates, blocks filled greedily by
descending fee rate, sub-threshold transactions never mined.
``inject_acceleration`` then moves selected low-fee pending transactions
to the top of the next block of chosen miners, as an acceleration service
would.

Randomness comes from numpy's PCG64 bit generator, drawn in a fixed
order, so a (config, seed) pair always yields the same bytes.
"""

from __future__ import annotations

import bisect
import hashlib
import itertools
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .model import Block, Dataset, MempoolSnapshot, Transaction, exact_rate_keys, gc_paused

GENESIS_TIME = 1_600_000_000


@dataclass(frozen=True)
class SynthConfig:
    miners: tuple                         # ((miner_id, share), ...), shares sum to 1
    n_blocks: int = 1000
    block_capacity: int = 1_000_000       # vbytes
    tx_arrival_rate: float = 2500.0       # mean arrivals per block interval
    feerate_mu: float = math.log(20.0)    # ln sat/vB
    feerate_sigma: float = 1.2
    seed: int = 0
    min_feerate: Fraction = Fraction(1)
    block_interval: int = 600             # mean seconds between blocks
    vsize_min: int = 140
    vsize_max: int = 400
    snapshot_every: int = 10              # blocks between mempool snapshots; 0 = none
    genesis_time: int = GENESIS_TIME

    def __post_init__(self):
        miners = tuple((str(m), Fraction(s)) for m, s in self.miners)
        if not miners:
            raise ValueError("need at least one miner")
        if any(s <= 0 for _, s in miners):
            raise ValueError("hash shares must be positive")
        if sum(s for _, s in miners) != 1:
            raise ValueError("hash shares must sum to 1")
        if len({m for m, _ in miners}) != len(miners):
            raise ValueError("miner ids must be unique")
        if self.n_blocks < 1 or self.block_capacity < 1 or self.tx_arrival_rate <= 0:
            raise ValueError("n_blocks, block_capacity and tx_arrival_rate must be positive")
        if self.feerate_sigma <= 0 or self.block_interval < 1:
            raise ValueError("feerate_sigma and block_interval must be positive")
        if not 1 <= self.vsize_min <= self.vsize_max:
            raise ValueError("need 1 <= vsize_min <= vsize_max")
        object.__setattr__(self, "miners", miners)
        object.__setattr__(self, "min_feerate", Fraction(self.min_feerate))


@dataclass(frozen=True)
class GroundTruth:
    accelerated: dict = field(default_factory=dict)   # txid -> accelerating miner
    accelerating_miners: frozenset = frozenset()
    shortfall: int = 0

    @property
    def accelerated_txids(self) -> frozenset:
        return frozenset(self.accelerated)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed % 2**64))


def generate(cfg: SynthConfig):
    """Build a norm-following chain. Returns (Dataset, GroundTruth)."""
    with gc_paused():
        return _generate(cfg)


def _generate(cfg: SynthConfig):
    rng = _rng(cfg.seed)
    n_blocks = cfg.n_blocks

    shares = np.array([float(s) for _, s in cfg.miners])
    cum = np.cumsum(shares)
    cum[-1] = 1.0
    miner_idx = np.minimum(np.searchsorted(cum, rng.random(n_blocks), side="right"),
                           len(cfg.miners) - 1)
    gaps = np.maximum(1, np.ceil(rng.exponential(cfg.block_interval, n_blocks))).astype(np.int64)
    counts = rng.poisson(cfg.tx_arrival_rate, n_blocks).astype(np.int64)
    n_tx = int(counts.sum())
    offsets = rng.random(n_tx)
    vsizes = rng.integers(cfg.vsize_min, cfg.vsize_max + 1, n_tx, dtype=np.int64)
    normals = rng.standard_normal(n_tx)

    stamps = cfg.genesis_time + np.cumsum(gaps)
    prev = np.concatenate(([cfg.genesis_time], stamps[:-1]))
    interval = np.repeat(np.arange(n_blocks), counts)
    arrivals = prev[interval] + 1 + np.floor(offsets * gaps[interval]).astype(np.int64)
    fees = np.rint(np.exp(cfg.feerate_mu + cfg.feerate_sigma * normals) * vsizes).astype(np.int64)

    keys = exact_rate_keys(fees, vsizes)
    # priority 0 = best: highest rate, then earliest arrival
    order = np.lexsort((np.arange(n_tx), -keys))
    prio = np.empty(n_tx, dtype=np.int64)
    prio[order] = np.arange(n_tx)
    by_prio = order  # prio -> tx index
    vs_by_prio = vsizes[by_prio]
    mf = cfg.min_feerate
    relayed = fees * mf.denominator >= mf.numerator * vsizes

    seed_hex = f"{cfg.seed % 2**64:016x}"
    txids = [f"{seed_hex}{i:048x}" for i in range(n_tx)]

    window = cfg.block_capacity // cfg.vsize_min + 1
    bounds = np.concatenate(([0], np.cumsum(counts)))
    pool = np.zeros(0, dtype=np.int64)
    blocks, snapshots = [], []
    for h in range(n_blocks):
        lo, hi = bounds[h], bounds[h + 1]
        fresh = prio[lo:hi][relayed[lo:hi]]
        if fresh.size:
            pool = np.sort(np.concatenate((pool, fresh)), kind="stable")
        if cfg.snapshot_every and h % cfg.snapshot_every == 0:
            snapshots.append(MempoolSnapshot(int(stamps[h]),
                                             frozenset(txids[i] for i in by_prio[pool])))
        filled = np.cumsum(vs_by_prio[pool[:window]])
        k = int(np.searchsorted(filled, cfg.block_capacity, side="right"))
        room = cfg.block_capacity - (int(filled[k - 1]) if k else 0)
        extra = []
        start = k
        while room >= cfg.vsize_min and start < pool.size:
            fits = np.flatnonzero(vs_by_prio[pool[start:]] <= room)
            if not fits.size:
                break
            j = start + int(fits[0])
            extra.append(j)
            room -= int(vs_by_prio[pool[j]])
            start = j + 1
        if extra:
            chosen = np.concatenate((pool[:k], pool[extra]))
            pool = np.delete(pool[k:], [j - k for j in extra])
        else:
            chosen = pool[:k]
            pool = pool[k:]
        miner = cfg.miners[int(miner_idx[h])][0]
        blocks.append(Block(
            h,
            hashlib.sha256(f"{seed_hex}:{h}".encode()).hexdigest(),
            miner,
            int(stamps[h]),
            tuple(map(txids.__getitem__, by_prio[chosen].tolist())),
            (f"{miner}-reward",),
            cfg.block_capacity,
        ))

    none = itertools.repeat(())
    txs = list(map(Transaction._make, zip(
        txids, vsizes.tolist(), fees.tolist(), arrivals.tolist(),
        none, none, itertools.repeat(False))))
    ds = Dataset(txs, blocks, snapshots)
    # prime caches with what is already known
    ds.__dict__["tx"] = dict(zip(txids, txs))
    ds.__dict__["rate_key"] = dict(zip(txids, keys.tolist()))
    return ds, GroundTruth()


def inject_acceleration(ds: Dataset, truth: GroundTruth, miners, n_txs: int, seed: int):
    """Accelerate ``n_txs`` low-fee pending transactions through ``miners``.

    Candidates are bottom-decile fee-rate transactions still pending when
    the first block of an accelerating miner at or after their arrival was
    mined.  Each chosen transaction is moved from its original block (if
    any) to the top of that block; the lowest-rate non-accelerated members
    are evicted (left unconfirmed) if capacity is exceeded.  Snapshots are
    not rewritten.  Returns (Dataset, GroundTruth); ``shortfall`` counts
    requested transactions that had no candidate.
    """
    miners = frozenset(miners)
    known = set(ds.miners())
    if not miners or not miners <= known:
        raise ValueError(f"unknown accelerating miners: {sorted(miners - known)}")
    keys = ds.rate_key
    txs = [t for t in ds.transactions if not t.is_coinbase]
    if not txs:
        return ds, replace(truth, shortfall=truth.shortfall + n_txs)
    key_arr = np.array(list(map(keys.__getitem__, [t.txid for t in txs])), dtype=np.int64)
    rank = max(1, math.ceil(len(txs) / 10)) - 1
    cutoff = int(np.partition(key_arr, rank)[rank])

    m_blocks = [i for i, b in enumerate(ds.blocks) if b.miner_id in miners]
    m_stamps = [ds.blocks[i].timestamp for i in m_blocks]
    commit = ds.commit_index
    candidates = []
    for i in np.flatnonzero(key_arr <= cutoff):
        t = txs[i]
        if t.arrival_time is None or t.txid in truth.accelerated:
            continue
        j = bisect.bisect_left(m_stamps, t.arrival_time)
        if j == len(m_blocks):
            continue
        target = m_blocks[j]
        ci = commit.get(t.txid)
        if ci is None or ci > target:
            candidates.append((t, target))

    take = min(n_txs, len(candidates))
    picked = sorted(_rng(seed).choice(len(candidates), size=take, replace=False).tolist()) if take else []
    chosen = [candidates[i] for i in picked]

    orders = {}

    def order_of(bi):
        if bi not in orders:
            orders[bi] = list(ds.blocks[bi].tx_order)
        return orders[bi]

    for t, _ in chosen:
        ci = commit.get(t.txid)
        if ci is not None:
            order_of(ci).remove(t.txid)
    tops = {}
    for t, target in chosen:
        tops.setdefault(target, []).append(t)
    accelerated = dict(truth.accelerated)
    index = ds.tx
    for target, group in tops.items():
        group.sort(key=lambda t: (t.arrival_time, t.txid))
        ids = [t.txid for t in group]
        rest = [x for x in order_of(target) if x not in set(ids)]
        cap = ds.blocks[target].max_vsize
        used = sum(index[x].vsize for x in ids + rest if x in index)
        while used > cap and rest:
            # evict the lowest-rate member, latest position first on ties
            victim = min(range(len(rest)), key=lambda i: (keys.get(rest[i], -1), -i))
            used -= index[rest[victim]].vsize if rest[victim] in index else 0
            del rest[victim]
        orders[target] = ids + rest
        for x in ids:
            accelerated[x] = ds.blocks[target].miner_id

    blocks = [replace(b, tx_order=tuple(orders[i])) if i in orders else b
              for i, b in enumerate(ds.blocks)]
    if not orders:
        blocks = ds.blocks
    new_truth = GroundTruth(accelerated, truth.accelerating_miners | miners,
                            truth.shortfall + (n_txs - take))
    return ds.with_blocks(blocks), new_truth
