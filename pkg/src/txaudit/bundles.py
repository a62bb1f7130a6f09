"""Private-relay bundle analysis.

Two heuristics flag bundles that probably wrap a publicly broadcast
transaction: a size-2 bundle whose first transaction pays a public
priority fee and whose second, from another issuer, pays the miner by
coinbase transfer; and a size-3 sandwich where one issuer brackets
somebody else's fee-paying transaction and pays the miner in the last leg.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

CATEGORIES = ("flashbots", "rogue", "miner-payout", "unknown")

PUBLIC_CAPTURE_2 = "public-capture-2"
SANDWICH_3 = "sandwich-3"
NO_PATTERN = "none"

WEI_PER_GWEI = 10**9


def normalize_category(value: str) -> str:
    cat = str(value).strip().lower().replace("_", "-").replace(" ", "-")
    if cat not in CATEGORIES:
        raise ValueError(f"unknown bundle category {value!r}")
    return cat


@dataclass(frozen=True)
class BundleTx:
    tx_hash: str
    issuer: str
    gas_used: int
    max_priority_fee_per_gas: int
    coinbase_transfer: int
    position_in_bundle: int

    def __post_init__(self):
        if self.gas_used < 1:
            raise ValueError(f"{self.tx_hash}: gas_used must be >= 1")
        if self.max_priority_fee_per_gas < 0 or self.coinbase_transfer < 0:
            raise ValueError(f"{self.tx_hash}: fees must be non-negative")


@dataclass(frozen=True)
class BundleRecord:
    block_number: int
    bundle_index: int
    txs: tuple
    category: str = "unknown"

    def __post_init__(self):
        txs = tuple(sorted(self.txs, key=lambda t: t.position_in_bundle))
        if not txs:
            raise ValueError("a bundle holds at least one transaction")
        if [t.position_in_bundle for t in txs] != list(range(1, len(txs) + 1)):
            raise ValueError(f"bundle {self.block_number}/{self.bundle_index}: "
                             "positions must run 1..n")
        object.__setattr__(self, "txs", txs)
        object.__setattr__(self, "category", normalize_category(self.category))

    @property
    def size(self) -> int:
        return len(self.txs)


@dataclass(frozen=True)
class BundleClassification:
    pattern: str
    public_tx_positions: tuple = ()


def bundle_effective_priority_fee(b: BundleRecord) -> Fraction:
    """Total miner reward per unit of gas, in wei/gas."""
    gas = sum(t.gas_used for t in b.txs)
    reward = sum(t.gas_used * t.max_priority_fee_per_gas + t.coinbase_transfer for t in b.txs)
    return Fraction(reward, gas)


def classify_bundle2(b: BundleRecord) -> BundleClassification:
    if b.size != 2:
        return BundleClassification(NO_PATTERN)
    t1, t2 = b.txs
    if (t1.issuer != t2.issuer
            and t1.max_priority_fee_per_gas > 0 and t1.coinbase_transfer == 0
            and t2.max_priority_fee_per_gas == 0 and t2.coinbase_transfer > 0):
        return BundleClassification(PUBLIC_CAPTURE_2, (1,))
    return BundleClassification(NO_PATTERN)


def classify_bundle3(b: BundleRecord) -> BundleClassification:
    if b.size != 3:
        return BundleClassification(NO_PATTERN)
    t1, t2, t3 = b.txs
    if (t1.issuer == t3.issuer != t2.issuer
            and t1.max_priority_fee_per_gas == 0 and t3.max_priority_fee_per_gas == 0
            and t2.max_priority_fee_per_gas > 0
            and t3.coinbase_transfer > 0):
        return BundleClassification(SANDWICH_3, (2,))
    return BundleClassification(NO_PATTERN)


def classify_bundle(b: BundleRecord) -> BundleClassification:
    if b.size == 2:
        return classify_bundle2(b)
    if b.size == 3:
        return classify_bundle3(b)
    return BundleClassification(NO_PATTERN)


@dataclass(frozen=True)
class BundleStats:
    n_bundles: int
    n_txs: int
    by_category: dict
    size_distribution: dict
    mean_size: Fraction
    max_size: int
    matched: dict            # pattern -> count
    matched_fraction: dict   # pattern -> share of bundles of the eligible size
    per_block: dict          # block_number -> bundle count


def bundle_stats(bundles) -> BundleStats:
    bundles = list(bundles)
    sizes = Counter(b.size for b in bundles)
    cats = Counter(b.category for b in bundles)
    patterns = Counter(classify_bundle(b).pattern for b in bundles)
    matched = {PUBLIC_CAPTURE_2: patterns[PUBLIC_CAPTURE_2], SANDWICH_3: patterns[SANDWICH_3]}
    fractions = {
        PUBLIC_CAPTURE_2: Fraction(matched[PUBLIC_CAPTURE_2], sizes[2]) if sizes[2] else Fraction(0),
        SANDWICH_3: Fraction(matched[SANDWICH_3], sizes[3]) if sizes[3] else Fraction(0),
    }
    n_txs = sum(b.size for b in bundles)
    return BundleStats(
        n_bundles=len(bundles),
        n_txs=n_txs,
        by_category={c: cats[c] for c in CATEGORIES},
        size_distribution=dict(sorted(sizes.items())),
        mean_size=Fraction(n_txs, len(bundles)) if bundles else Fraction(0),
        max_size=max(sizes, default=0),
        matched=matched,
        matched_fraction=fractions,
        per_block=dict(sorted(Counter(b.block_number for b in bundles).items())),
    )


def read_bundles(path) -> list:
    """Group per-transaction JSONL rows into bundles, ordered by (block, index)."""
    from .io import RecordError, iter_jsonl

    groups = {}
    cats = {}
    for lineno, obj, err in iter_jsonl(path):
        where = f"line {lineno}"
        if obj is None:
            raise RecordError(f"{where}: {err}")
        try:
            key = (int(obj["block_number"]), int(obj["bundle_index"]))
            tx = BundleTx(
                str(obj["tx_hash"]), str(obj["issuer"]), int(obj["gas_used"]),
                int(obj["max_priority_fee_per_gas_wei"]), int(obj["coinbase_transfer_wei"]),
                int(obj["position_in_bundle"]),
            )
            cat = normalize_category(obj.get("category", "unknown"))
        except KeyError as exc:
            raise RecordError(f"{where}: missing required field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise RecordError(f"{where}: {exc}") from None
        if cats.setdefault(key, cat) != cat:
            raise RecordError(f"{where}: category disagrees with earlier rows of bundle {key}")
        groups.setdefault(key, []).append(tx)
    out = []
    for key in sorted(groups):
        try:
            out.append(BundleRecord(key[0], key[1], tuple(groups[key]), cats[key]))
        except ValueError as exc:
            raise RecordError(str(exc)) from None
    return out
