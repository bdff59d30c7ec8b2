import pytest
from hypothesis import given, strategies as st

from srltrace.align import (
    AnchorSessionMismatch,
    SessionMismatch,
    SyncedSegment,
    UnsortedInput,
    combine_windows,
    parse_utterances,
    synchronize,
    write_utterances,
)
from srltrace.ingest import (
    ActionKind,
    Outcome,
    SyncAnchor,
    Transaction,
    UtteranceSegment,
)


def _txn(session, ts, step="st"):
    return Transaction("stu", session, ts, ActionKind.ATTEMPT, step, Outcome.CORRECT)


def _seg(session, start_ms, end_ms, text):
    return SyncedSegment(session, start_ms, end_ms, text)


class TestSynchronize:
    def test_offset_arithmetic(self):
        anchor = SyncAnchor("a", 1_000_000, 120.0)
        synced = synchronize([UtteranceSegment("a", 130.0, 131.5, "x")], anchor)
        assert synced[0].start_ms == 1_010_000
        assert synced[0].end_ms == 1_011_500

    def test_zero_offset_identity(self):
        anchor = SyncAnchor("a", 120_000, 120.0)
        seg = UtteranceSegment("a", 7.25, 9.0, "x")
        synced = synchronize([seg], anchor)
        assert synced[0].start_ms == 7250
        assert synced[0].end_ms == 9000

    def test_session_mismatch(self):
        anchor = SyncAnchor("b", 0, 0.0)
        with pytest.raises(AnchorSessionMismatch):
            synchronize([UtteranceSegment("a", 0.0, 1.0, "x")], anchor)

    def test_rounds_to_whole_milliseconds(self):
        anchor = SyncAnchor("a", 0, 0.0)
        synced = synchronize([UtteranceSegment("a", 0.0004, 0.0006, "x")], anchor)
        assert synced[0].start_ms == 0
        assert synced[0].end_ms == 1

    def test_ordering_preserved(self):
        anchor = SyncAnchor("a", 500, 0.0)
        segs = [UtteranceSegment("a", t, t + 0.5, str(t)) for t in (1.0, 2.0, 3.0)]
        synced = synchronize(segs, anchor)
        assert [s.text for s in synced] == ["1.0", "2.0", "3.0"]


class TestCombineWindows:
    def test_single_window(self):
        segments = [_seg("a", 0, 2000, "a"), _seg("a", 2500, 4000, "b")]
        utterances = combine_windows(segments, [_txn("a", 5000)])
        assert len(utterances) == 1
        assert utterances[0].text == "a b"
        assert utterances[0].segment_count == 2
        assert utterances[0].utterance_id == "a#0"
        assert utterances[0].window == (None, 0)

    def test_boundary_crossing_segment_joins_prior_window(self):
        # Starts before the action at 5000 ms, ends after it.
        segments = [_seg("a", 4800, 6000, "cross")]
        utterances = combine_windows(segments, [_txn("a", 5000), _txn("a", 9000)])
        assert utterances[0].text == "cross"
        assert utterances[1].text == ""

    def test_empty_window_still_emitted(self):
        transactions = [_txn("a", 1000), _txn("a", 2000), _txn("a", 3000),
                        _txn("a", 4000)]
        segments = [_seg("a", 500, 600, "first")]
        utterances = combine_windows(segments, transactions)
        assert len(utterances) == 4
        assert utterances[3].utterance_id == "a#3"
        assert utterances[3].text == ""
        assert utterances[3].segment_count == 0

    def test_segment_at_action_timestamp_goes_to_next_window(self):
        segments = [_seg("a", 2000, 2100, "x")]
        utterances = combine_windows(segments, [_txn("a", 2000), _txn("a", 4000)])
        assert utterances[0].text == ""
        assert utterances[1].text == "x"

    def test_tail_segments_discarded(self):
        segments = [_seg("a", 100, 200, "kept"), _seg("a", 6000, 7000, "dropped")]
        utterances = combine_windows(segments, [_txn("a", 5000)])
        assert [u.text for u in utterances] == ["kept"]
        assert sum(u.segment_count for u in utterances) == 1

    def test_unsorted_inputs_rejected(self):
        segments = [_seg("a", 3000, 3100, "x"), _seg("a", 1000, 1100, "y")]
        with pytest.raises(UnsortedInput):
            combine_windows(segments, [_txn("a", 5000)])
        with pytest.raises(UnsortedInput):
            combine_windows([], [_txn("a", 5000), _txn("a", 4000)])

    def test_cross_session_rejected(self):
        with pytest.raises(SessionMismatch):
            combine_windows([_seg("b", 0, 1, "x")], [_txn("a", 5000)])

    @given(st.lists(st.integers(0, 10_000), min_size=0, max_size=60),
           st.lists(st.integers(1, 9), min_size=1, max_size=12))
    def test_partition_property(self, seg_starts, action_gaps):
        seg_starts = sorted(seg_starts)
        segments = [_seg("a", s, s + 5, f"w{i}") for i, s in enumerate(seg_starts)]
        ts = 0
        transactions = []
        for gap in action_gaps:
            ts += gap * 200
            transactions.append(_txn("a", ts))
        utterances = combine_windows(segments, transactions)
        assert len(utterances) == len(transactions)
        discarded = sum(1 for s in seg_starts if s >= transactions[-1].timestamp)
        assert sum(u.segment_count for u in utterances) + discarded == len(segments)
        # Direct re-bucketing oracle.
        for k, u in enumerate(utterances):
            lo = transactions[k - 1].timestamp if k > 0 else float("-inf")
            hi = transactions[k].timestamp
            expected = [s for s in segments if lo <= s.start_ms < hi]
            assert u.segment_count == len(expected)
            assert u.text == " ".join(s.text for s in expected)


def test_export_round_trip(tmp_path):
    segments = [_seg("a", 0, 2000, "hello there"), _seg("a", 2500, 4000, "again")]
    utterances = combine_windows(segments, [_txn("a", 3000), _txn("a", 9000)])
    path = tmp_path / "utterances.csv"
    write_utterances(path, utterances)
    assert parse_utterances(path) == utterances
