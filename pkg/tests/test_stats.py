import pytest
from hypothesis import given, strategies as st

from oracles import chi2_sf_closed_form, pearson_chi2_naive, wilson_interval_naive
from srltrace.stats import (
    BhOutcome,
    InvalidCounts,
    InvalidP,
    Table2x2,
    ZeroMargin,
    bh_adjust,
    chi2_2x2,
    chi2_sf,
    exact_ci,
    wilson_ci,
)


class TestChi2Sf:
    def test_matches_closed_form_df3(self):
        # sf(6, 3) = erfc(sqrt(3)) + sqrt(12/pi) exp(-3) = 0.111610...
        assert chi2_sf(6.0, 3) == pytest.approx(chi2_sf_closed_form(6.0, 3), abs=1e-12)
        assert chi2_sf(6.0, 3) == pytest.approx(0.1116, abs=1e-4)

    def test_boundary_x_zero(self):
        for df in (1, 2, 5, 50):
            assert chi2_sf(0.0, df) == 1.0

    def test_normal_tail_relation_df1(self):
        # z^2 = 1.96^2 = 3.8416 leaves exactly the two-sided normal 5% tail.
        assert chi2_sf(1.96 ** 2, 1) == pytest.approx(0.05, abs=1e-4)

    def test_closed_form_agreement_over_grid(self):
        for df in (1, 3, 5, 7, 9, 49):
            for x in (0.5, 2.0, 10.0, 50.0, 200.0):
                assert chi2_sf(x, df) == pytest.approx(
                    chi2_sf_closed_form(x, df), abs=1e-10
                )

    def test_strictly_decreasing_in_x(self):
        values = [chi2_sf(x / 4.0, 4) for x in range(1, 100)]
        assert all(a > b for a, b in zip(values, values[1:]))


class TestChi2Table:
    def test_hand_computed_example(self):
        # E = {12, 18, 28, 42} for margins {30, 70} x {40, 60}.
        stat, df, p = chi2_2x2(Table2x2(10, 20, 30, 40))
        assert stat == pytest.approx(pearson_chi2_naive(10, 20, 30, 40), abs=1e-12)
        assert stat == pytest.approx(0.7937, abs=1e-3)
        assert df == 1

    def test_perfect_independence(self):
        stat, _, p = chi2_2x2(Table2x2(10, 10, 10, 10))
        assert stat == 0.0
        assert p == 1.0

    def test_diagonal_table_valid_but_empty_row_raises(self):
        stat, _, _ = chi2_2x2(Table2x2(5, 0, 0, 5))
        assert stat == pytest.approx(10.0)
        with pytest.raises(ZeroMargin):
            chi2_2x2(Table2x2(5, 5, 0, 0))

    @given(st.integers(1, 200), st.integers(1, 200), st.integers(1, 200),
           st.integers(1, 200))
    def test_symmetries(self, a, b, c, d):
        base, _, _ = chi2_2x2(Table2x2(a, b, c, d))
        rows_swapped, _, _ = chi2_2x2(Table2x2(c, d, a, b))
        cols_swapped, _, _ = chi2_2x2(Table2x2(b, a, d, c))
        transposed, _, _ = chi2_2x2(Table2x2(a, c, b, d))
        assert base == pytest.approx(rows_swapped, rel=1e-9)
        assert base == pytest.approx(cols_swapped, rel=1e-9)
        assert base == pytest.approx(transposed, rel=1e-9)

    def test_negative_cell_rejected(self):
        with pytest.raises(InvalidCounts):
            Table2x2(-1, 2, 3, 4)


class TestBenjaminiHochberg:
    def test_hand_traced_step_up(self):
        # thresholds .0125 / .025 / .0375 / .05 -> largest k is 2.
        outcomes = bh_adjust([0.01, 0.02, 0.04, 0.10], q=0.05)
        assert [o.rejected for o in outcomes] == [True, True, False, False]
        assert [o.rank for o in outcomes] == [1, 2, 3, 4]
        assert all(o.m == 4 and o.q == 0.05 for o in outcomes)

    def test_all_zero_rejected(self):
        outcomes = bh_adjust([0.0, 0.0, 0.0], q=0.05)
        assert all(o.rejected for o in outcomes)

    def test_rejection_set_is_prefix_of_sorted_order(self):
        ps = [0.04, 0.001, 0.3, 0.012, 0.051, 0.02]
        outcomes = bh_adjust(ps, q=0.05)
        rejected_ranks = sorted(o.rank for o in outcomes if o.rejected)
        assert rejected_ranks == list(range(1, len(rejected_ranks) + 1))

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=40),
           st.floats(0.01, 0.2), st.floats(0.2, 0.99))
    def test_monotone_in_q(self, ps, q_small, q_big):
        n_small = sum(o.rejected for o in bh_adjust(ps, q=q_small))
        n_big = sum(o.rejected for o in bh_adjust(ps, q=q_big))
        assert n_small <= n_big

    def test_invalid_inputs(self):
        with pytest.raises(InvalidP):
            bh_adjust([0.5, 1.2], q=0.05)
        with pytest.raises(InvalidP):
            bh_adjust([0.5], q=0.0)

    def test_stable_ranks_for_ties(self):
        outcomes = bh_adjust([0.02, 0.02, 0.02], q=0.05)
        assert [o.rank for o in outcomes] == [1, 2, 3]


class TestWilson:
    def test_hand_evaluated_8_of_10(self):
        low, high = wilson_ci(8, 10)
        ref_low, ref_high = wilson_interval_naive(8, 10)
        assert low == pytest.approx(ref_low, abs=1e-12)
        assert high == pytest.approx(ref_high, abs=1e-12)
        assert low == pytest.approx(0.490, abs=1e-3)
        assert high == pytest.approx(0.943, abs=1e-3)

    def test_boundaries_exact(self):
        assert wilson_ci(0, 7)[0] == 0.0
        assert wilson_ci(10, 10)[1] == 1.0

    @given(st.integers(1, 500), st.data())
    def test_contains_point_estimate(self, n, data):
        successes = data.draw(st.integers(0, n))
        low, high = wilson_ci(successes, n)
        assert low <= successes / n <= high
        assert 0.0 <= low <= high <= 1.0

    def test_exact_interval_flag(self):
        low, high = exact_ci(8, 10)
        assert low < 0.8 < high
        assert (low, high) != wilson_ci(8, 10)

    def test_invalid_counts(self):
        with pytest.raises(InvalidCounts):
            wilson_ci(5, 4)
        with pytest.raises(InvalidCounts):
            wilson_ci(0, 0)


def test_bh_outcome_is_frozen_record():
    o = BhOutcome(p=0.01, rank=1, rejected=True, q=0.05, m=3)
    with pytest.raises(AttributeError):
        o.p = 0.5
