import itertools
import json
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from txaudit.bundles import (
    CATEGORIES, NO_PATTERN, PUBLIC_CAPTURE_2, SANDWICH_3, BundleRecord, BundleTx,
    bundle_effective_priority_fee, bundle_stats, classify_bundle, classify_bundle2,
    classify_bundle3, normalize_category, read_bundles,
)
from txaudit.io import RecordError

GWEI = 10**9

# (block, index) -> expected pattern for tests/fixtures/bundles.jsonl
CORPUS_PATTERNS = {
    (100, 0): PUBLIC_CAPTURE_2, (100, 1): NO_PATTERN, (101, 0): NO_PATTERN,
    (101, 1): NO_PATTERN, (102, 0): NO_PATTERN, (102, 1): SANDWICH_3,
    (103, 0): NO_PATTERN, (103, 1): NO_PATTERN, (104, 0): NO_PATTERN,
    (104, 1): NO_PATTERN, (105, 0): NO_PATTERN, (105, 1): PUBLIC_CAPTURE_2,
}


def btx(pos, issuer, gas=21000, prio=0, transfer=0):
    return BundleTx(f"h{pos}{issuer}", issuer, gas, prio, transfer, pos)


def bundle(*txs, category="flashbots"):
    return BundleRecord(1, 0, txs, category)


class TestEffectiveFee:
    def test_single(self):
        assert bundle_effective_priority_fee(bundle(btx(1, "A", 50000, 2 * GWEI))) == 2 * GWEI

    def test_worked_example(self):
        b = bundle(btx(1, "A", 100_000, 2 * GWEI), btx(2, "B", 100_000, 0, 4 * 10**14))
        assert bundle_effective_priority_fee(b) == 3 * GWEI

    def test_zero(self):
        assert bundle_effective_priority_fee(bundle(btx(1, "A"), btx(2, "B"))) == 0

    @given(st.lists(st.tuples(st.integers(1, 10**6), st.integers(0, 10**11),
                              st.integers(0, 10**18)), min_size=1, max_size=5))
    def test_bounds(self, rows):
        b = bundle(*[btx(i + 1, "A", g, p, t) for i, (g, p, t) in enumerate(rows)])
        fee = bundle_effective_priority_fee(b)
        assert min(p for _, p, _ in rows) <= fee
        assert fee <= max(p + Fraction(t, g) for g, p, t in rows)

    @given(st.lists(st.integers(1, 10**6), min_size=2, max_size=4), st.integers(0, 10**18),
           st.data())
    def test_transfer_split_invariance(self, gases, total, data):
        cut = data.draw(st.integers(0, total))
        one = bundle(*[btx(i + 1, "A", g, 0, total if i == 0 else 0)
                       for i, g in enumerate(gases)])
        two = bundle(*[btx(i + 1, "A", g, 0, cut if i == 0 else (total - cut if i == 1 else 0))
                       for i, g in enumerate(gases)])
        assert bundle_effective_priority_fee(one) == bundle_effective_priority_fee(two)


class TestSize2:
    def test_match(self):
        c = classify_bundle2(bundle(btx(1, "A", prio=5 * GWEI), btx(2, "B", transfer=10**15)))
        assert c.pattern == PUBLIC_CAPTURE_2 and c.public_tx_positions == (1,)

    def test_same_issuer(self):
        b = bundle(btx(1, "A", prio=5 * GWEI), btx(2, "A", transfer=10**15))
        assert classify_bundle2(b).pattern == NO_PATTERN

    def test_tx1_transfer(self):
        b = bundle(btx(1, "A", prio=5 * GWEI, transfer=1), btx(2, "B", transfer=10**15))
        assert classify_bundle2(b).pattern == NO_PATTERN

    def test_wrong_size(self):
        assert classify_bundle2(bundle(btx(1, "A"))).pattern == NO_PATTERN

    def test_truth_table(self):
        for same, p1, t1, p2, t2 in itertools.product([False, True], repeat=5):
            b = bundle(btx(1, "A", prio=p1, transfer=t1),
                       btx(2, "A" if same else "B", prio=p2, transfer=t2))
            want = (not same) and p1 and not t1 and not p2 and t2
            assert (classify_bundle2(b).pattern == PUBLIC_CAPTURE_2) == bool(want)


class TestSize3:
    def test_match(self):
        b = bundle(btx(1, "A"), btx(2, "B", prio=3 * GWEI), btx(3, "A", transfer=10**16))
        c = classify_bundle3(b)
        assert c.pattern == SANDWICH_3 and c.public_tx_positions == (2,)

    def test_outer_issuers_differ(self):
        b = bundle(btx(1, "A"), btx(2, "B", prio=3 * GWEI), btx(3, "C", transfer=10**16))
        assert classify_bundle3(b).pattern == NO_PATTERN

    def test_victim_without_fee(self):
        b = bundle(btx(1, "A"), btx(2, "B"), btx(3, "A", transfer=10**16))
        assert classify_bundle3(b).pattern == NO_PATTERN

    def test_truth_table(self):
        for i2, i3, p1, p2, p3, t3 in itertools.product("AB", "AB", *[[0, 1]] * 4):
            b = bundle(btx(1, "A", prio=p1), btx(2, i2, prio=p2), btx(3, i3, prio=p3, transfer=t3))
            want = i3 == "A" and i2 != "A" and not p1 and not p3 and p2 and t3
            assert (classify_bundle3(b).pattern == SANDWICH_3) == bool(want)

    def test_dispatch(self):
        assert classify_bundle(bundle(*[btx(i, "A") for i in range(1, 5)])).pattern == NO_PATTERN


class TestRecords:
    def test_positions_must_be_contiguous(self):
        with pytest.raises(ValueError):
            bundle(btx(1, "A"), btx(3, "B"))

    def test_gas_positive(self):
        with pytest.raises(ValueError):
            btx(1, "A", gas=0)

    @pytest.mark.parametrize("raw,cat", [("Flashbots", "flashbots"), ("miner payout", "miner-payout"),
                                         ("MINER_PAYOUT", "miner-payout"), (" rogue ", "rogue")])
    def test_category_normalised(self, raw, cat):
        assert normalize_category(raw) == cat

    def test_unknown_category(self):
        with pytest.raises(ValueError):
            normalize_category("mev-geth")


class TestStats:
    def test_empty(self):
        s = bundle_stats([])
        assert s.n_bundles == 0 and s.mean_size == 0 and s.max_size == 0
        assert all(v == 0 for v in s.matched.values())
        assert all(v == 0 for v in s.by_category.values())

    def test_mean_and_max(self):
        bs = [BundleRecord(1, i, [btx(k, "A") for k in range(1, n + 1)]) for i, n in
              enumerate((1, 2, 3))]
        s = bundle_stats(bs)
        assert s.mean_size == 2 and s.max_size == 3


class TestCorpus:
    def test_reads_and_classifies(self, fixtures_dir):
        bundles = read_bundles(fixtures_dir / "bundles.jsonl")
        assert [(b.block_number, b.bundle_index) for b in bundles] == sorted(CORPUS_PATTERNS)
        got = {(b.block_number, b.bundle_index): classify_bundle(b).pattern for b in bundles}
        assert got == CORPUS_PATTERNS

    def test_stats_match_per_bundle_oracle(self, fixtures_dir):
        bundles = read_bundles(fixtures_dir / "bundles.jsonl")
        s = bundle_stats(bundles)
        per = [classify_bundle(b).pattern for b in bundles]
        assert s.matched == {PUBLIC_CAPTURE_2: per.count(PUBLIC_CAPTURE_2),
                             SANDWICH_3: per.count(SANDWICH_3)}
        n2 = sum(b.size == 2 for b in bundles)
        n3 = sum(b.size == 3 for b in bundles)
        assert s.matched_fraction == {PUBLIC_CAPTURE_2: Fraction(per.count(PUBLIC_CAPTURE_2), n2),
                                      SANDWICH_3: Fraction(per.count(SANDWICH_3), n3)}
        assert set(s.by_category) == set(CATEGORIES)
        assert sum(s.by_category.values()) == 12
        assert s.per_block == {100: 2, 101: 2, 102: 2, 103: 2, 104: 2, 105: 2}

    def test_bad_rows(self, tmp_path):
        row = {"block_number": 1, "bundle_index": 0, "position_in_bundle": 1, "tx_hash": "h",
               "issuer": "A", "gas_used": 1, "max_priority_fee_per_gas_wei": 0,
               "coinbase_transfer_wei": 0}
        p = tmp_path / "b.jsonl"
        p.write_text(json.dumps(row) + "\n" + json.dumps({**row, "gas_used": None}) + "\n")
        with pytest.raises(RecordError, match="line 2"):
            read_bundles(p)
        p.write_text(json.dumps({k: v for k, v in row.items() if k != "issuer"}) + "\n")
        with pytest.raises(RecordError, match="issuer"):
            read_bundles(p)
