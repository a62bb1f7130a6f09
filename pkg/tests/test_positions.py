import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from txaudit.model import Dataset
from txaudit.positions import (
    EmptyBlockError, EmptyCohortError, cohort_signed_errors, flag_accelerated,
    percentile_rank, position_reports, position_table, ppe, ppe_report, sppe,
)

from conftest import block, block_from_rates, tx


def oracle_signed_errors(rates):
    """Brute-force signed error per observed position (ties keep mined order)."""
    n = len(rates)
    out = []
    for o, r in enumerate(rates):
        pred = sum(1 for k, s in enumerate(rates) if s > r or (s == r and k < o))
        out.append(Fraction(0) if n == 1 else Fraction(100 * (pred - o), n - 1))
    return out


class TestPercentileRank:
    def test_top(self):
        assert all(percentile_rank(1, n) == 0 for n in range(1, 20))

    def test_bottom(self):
        assert all(percentile_rank(n, n) == 100 for n in range(2, 20))

    def test_interpolation(self):
        assert percentile_rank(3, 5) == 50
        for n in range(2, 12):
            for i in range(1, n + 1):
                assert percentile_rank(i, n) == Fraction(i - 1, n - 1) * 100

    @pytest.mark.parametrize("i,n", [(0, 3), (4, 3), (1, 0)])
    def test_out_of_range(self, i, n):
        with pytest.raises(ValueError):
            percentile_rank(i, n)


class TestPpe:
    def test_sorted_block_is_zero(self):
        ds = block_from_rates([9, 7, 7, 3, 1])
        assert ppe(ds.blocks[0], ds) == 0

    def test_swapped_pair(self):
        ds = block_from_rates([1, 2])
        assert ppe(ds.blocks[0], ds) == 100

    def test_reversed_four(self):
        ds = block_from_rates([1, 2, 3, 4])
        assert ppe(ds.blocks[0], ds) == Fraction(200, 3)

    def test_single_transaction(self):
        ds = block_from_rates([3])
        assert ppe(ds.blocks[0], ds) == 0

    def test_empty_block(self):
        ds = Dataset([tx("cb", 0, coinbase=True)], [block(1, ["cb"])])
        with pytest.raises(EmptyBlockError):
            ppe(ds.blocks[0], ds)
        assert ppe_report(ds) == []

    def test_report_rows(self):
        ds = Dataset([tx("a", 100), tx("b", 900), tx("c", 5)],
                     [block(1, ["a", "b"], "P"), block(2, ["c"], "Q")])
        assert ppe_report(ds) == [(1, "P", 2, Fraction(100)), (2, "Q", 1, Fraction(0))]

    @given(st.lists(st.integers(0, 9), min_size=1, max_size=10), st.integers(2, 50))
    def test_fee_scaling_invariance(self, rates, k):
        a = block_from_rates(rates)
        b = block_from_rates([r * k for r in rates])
        assert ppe(a.blocks[0], a) == ppe(b.blocks[0], b)

    @given(st.lists(st.integers(0, 9), min_size=1, max_size=10))
    def test_zero_iff_norm_ordered(self, rates):
        ds = block_from_rates(rates)
        ordered = all(a >= b for a, b in zip(rates, rates[1:]))
        assert (ppe(ds.blocks[0], ds) == 0) == ordered

    @given(st.lists(st.integers(0, 9), min_size=1, max_size=10))
    def test_in_range(self, rates):
        ds = block_from_rates(rates)
        assert 0 <= ppe(ds.blocks[0], ds) <= 100
        for r in position_reports(ds.blocks[0], ds):
            assert 0 <= r.predicted_rank <= 100 and -100 <= r.signed_error <= 100


class TestSppe:
    def test_bottom_tx_at_top(self):
        ds = block_from_rates([1] + [50] * 199, miner="P")
        assert sppe({"t0"}, "P", ds) == 100

    def test_cohort_at_predicted_positions(self):
        ds = block_from_rates([9, 5, 3, 1], miner="P")
        assert sppe({"t1", "t3"}, "P", ds) == 0

    def test_other_miners_ignored(self):
        ds = block_from_rates([1, 9], miner="P")
        with pytest.raises(EmptyCohortError):
            sppe({"t0"}, "Q", ds)

    def test_cohort_in_five_tx_block_exhaustive(self):
        rates = [4, 8, 1, 6, 3]
        for cohort in itertools.combinations(range(5), 3):
            for perm in itertools.permutations(rates):
                ds = block_from_rates(perm, miner="P")
                ids = {f"t{i}" for i in cohort}
                expect = oracle_signed_errors(list(perm))
                assert sppe(ids, "P", ds) == sum(expect[i] for i in cohort) / 3

    def test_mean_of_per_tx_errors_across_blocks(self):
        txs = [tx("a", 100), tx("b", 900), tx("c", 50), tx("d", 10), tx("e", 20)]
        ds = Dataset(txs, [block(1, ["a", "b"], "P"), block(2, ["d", "c", "e"], "P")])
        errs = cohort_signed_errors({"a", "d"}, "P", ds)
        assert errs == {"a": Fraction(100), "d": Fraction(100)}
        assert sppe({"a", "d"}, "P", ds) == 100


class TestFlagAccelerated:
    def test_norm_ordered_dataset(self):
        ds = block_from_rates([9, 8, 5, 5, 1])
        assert flag_accelerated(ds) == {}

    def test_forced_low_fee_tx(self):
        ds = block_from_rates([1] + [100 - i % 90 for i in range(199)])
        flagged = flag_accelerated(ds, 99)
        assert set(flagged) == {"t0"} and flagged["t0"] == 100

    def test_nested_threshold_sets(self):
        ds = block_from_rates([1, 3, 2, 9, 7, 4, 8, 5, 6, 0, 2, 2])
        sets = [set(flag_accelerated(ds, t)) for t in (100, 99, 90, 50, 1)]
        for a, b in zip(sets, sets[1:]):
            assert a <= b

    def test_threshold_bounds(self):
        ds = block_from_rates([1])
        with pytest.raises(ValueError):
            flag_accelerated(ds, 101)
        assert flag_accelerated(ds, 0) == {"t0": 0}

    @settings(max_examples=60)
    @given(st.lists(st.lists(st.integers(0, 6), min_size=1, max_size=8), min_size=1, max_size=5),
           st.integers(0, 100))
    def test_matches_per_block_reports(self, blocks_rates, threshold):
        txs, blocks = [], []
        for h, rates in enumerate(blocks_rates):
            ids = []
            for i, r in enumerate(rates):
                txs.append(tx(f"b{h}t{i}", r * 10, 10))
                ids.append(f"b{h}t{i}")
            blocks.append(block(h, ids))
        ds = Dataset(txs, blocks)
        want = {r.txid: r.signed_error for b in ds.blocks for r in position_reports(b, ds)
                if r.signed_error >= threshold}
        assert flag_accelerated(ds, threshold) == want
        table = position_table(ds)
        assert len(table.txids) == len(txs)
