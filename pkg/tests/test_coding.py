import pytest
from hypothesis import given, strategies as st

from oracles import cohen_kappa_from_table
from srltrace.coding import (
    CATEGORIES,
    ConflictingLabelsWithoutPriority,
    ItemSetMismatch,
    SrlCodes,
    cohen_kappa,
    merge_codes,
    parse_codes,
    reliability_summary,
    write_codes,
)


def _labels_from_table(yes_yes, yes_no, no_yes, no_no, category="plan"):
    """Two coder label lists realizing a given 2x2 agreement table."""
    a, b = [], []
    uid = 0
    for fa, fb, count in ((True, True, yes_yes), (True, False, yes_no),
                          (False, True, no_yes), (False, False, no_no)):
        for _ in range(count):
            a.append(SrlCodes(f"u{uid}", "c1", **{category: fa}))
            b.append(SrlCodes(f"u{uid}", "c2", **{category: fb}))
            uid += 1
    return a, b


class TestCohenKappa:
    def test_hand_computed_table(self):
        # [[20,5],[10,15]]: p_o = 0.70, p_e = 0.50, kappa = 0.40.
        a, b = _labels_from_table(20, 5, 10, 15)
        res = cohen_kappa(a, b, "plan")
        assert res.observed_agreement == pytest.approx(0.70)
        assert res.expected_agreement == pytest.approx(0.50)
        assert res.kappa == pytest.approx(0.40, abs=1e-6)
        assert res.kappa == pytest.approx(
            cohen_kappa_from_table(20, 5, 10, 15), abs=1e-12
        )
        assert res.n_items == 50

    def test_perfect_agreement(self):
        a, b = _labels_from_table(12, 0, 0, 8)
        assert cohen_kappa(a, b, "plan").kappa == pytest.approx(1.0)

    def test_degenerate_marginals_reported_undefined(self):
        a, b = _labels_from_table(30, 0, 0, 0)
        res = cohen_kappa(a, b, "plan")
        assert res.kappa is None
        assert res.expected_agreement == 1.0

    def test_item_set_mismatch(self):
        a, _ = _labels_from_table(3, 0, 0, 3)
        _, b = _labels_from_table(3, 0, 0, 2)
        with pytest.raises(ItemSetMismatch):
            cohen_kappa(a, b, "plan")

    @given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30),
           st.integers(0, 30))
    def test_symmetric_in_coders(self, yy, yn, ny, nn):
        if yy + yn + ny + nn == 0:
            return
        a, b = _labels_from_table(yy, yn, ny, nn)
        r1 = cohen_kappa(a, b, "plan")
        r2 = cohen_kappa(b, a, "plan")
        if r1.kappa is None:
            assert r2.kappa is None
        else:
            assert r1.kappa == pytest.approx(r2.kappa, abs=1e-12)

    @given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1,
                    max_size=60))
    def test_kappa_one_iff_identical(self, pairs):
        a = [SrlCodes(f"u{i}", "c1", act=fa) for i, (fa, _) in enumerate(pairs)]
        b = [SrlCodes(f"u{i}", "c2", act=fb) for i, (_, fb) in enumerate(pairs)]
        res = cohen_kappa(a, b, "act")
        identical = all(fa == fb for fa, fb in pairs)
        if res.kappa is not None:
            assert (res.kappa == pytest.approx(1.0)) == identical


class TestMerge:
    def test_single_coder_identity(self):
        labels = [SrlCodes("u0", "c1", process=True), SrlCodes("u1", "c1", act=True)]
        result = merge_codes(labels, ["u0", "u1"])
        assert result.codes["u0"].process and result.codes["u1"].act
        assert result.uncoded == ()

    def test_priority_resolves_disagreement(self):
        labels = [
            SrlCodes("u0", "c1", plan=True),
            SrlCodes("u0", "c2", act=True),
        ]
        result = merge_codes(labels, ["u0"], policy="adjudicated",
                             coder_priority=["c1", "c2"])
        assert result.codes["u0"].plan and not result.codes["u0"].act

    def test_single_coder_conflict_raises(self):
        labels = [
            SrlCodes("u0", "c1", plan=True),
            SrlCodes("u0", "c2", act=True),
        ]
        with pytest.raises(ConflictingLabelsWithoutPriority):
            merge_codes(labels, ["u0"])

    def test_agreeing_double_codes_tolerated(self):
        labels = [
            SrlCodes("u0", "c1", plan=True),
            SrlCodes("u0", "c2", plan=True),
        ]
        result = merge_codes(labels, ["u0"])
        assert result.codes["u0"].plan

    def test_uncoded_gets_all_false_and_tallied(self):
        labels = [SrlCodes("u0", "c1", process=True)]
        result = merge_codes(labels, ["u0", "u1"])
        assert result.uncoded == ("u1",)
        assert result.codes["u1"].flags() == (False, False, False, False)

    def test_idempotent(self):
        labels = [
            SrlCodes("u0", "c1", process=True, error=True),
            SrlCodes("u1", "c2", act=True),
        ]
        once = merge_codes(labels, ["u0", "u1", "u2"])
        again = merge_codes(list(once.codes.values()), ["u0", "u1", "u2"])
        assert again.codes == once.codes

    def test_same_coder_last_write_wins(self):
        labels = [
            SrlCodes("u0", "c1", plan=True),
            SrlCodes("u0", "c1", act=True),
        ]
        result = merge_codes(labels, ["u0"])
        assert result.codes["u0"].act and not result.codes["u0"].plan


class TestCodesCsv:
    def test_round_trip(self, tmp_path):
        labels = [
            SrlCodes("s#0", "c1", process=True, plan=True),
            SrlCodes("s#1", "c2", error=True),
        ]
        path = tmp_path / "codes.csv"
        write_codes(path, labels)
        assert parse_codes(path) == labels

    def test_reliability_summary_reports_four_categories(self):
        a, b = _labels_from_table(10, 2, 1, 12)
        summary = reliability_summary(a + b)
        assert summary["status"] == "ok"
        assert set(summary["categories"]) == set(CATEGORIES)
        assert summary["n_items"] == 25

    def test_reliability_summary_single_coder(self):
        labels = [SrlCodes("u0", "c1", act=True)]
        summary = reliability_summary(labels)
        assert summary["categories"] == {}
        assert "insufficient" in summary["status"]
