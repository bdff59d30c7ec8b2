import json

import pytest
from hypothesis import given, strategies as st

from srltrace.ingest import (
    ActionKind,
    EmptyFile,
    MalformedSegment,
    MissingColumn,
    NegativeDuration,
    NonMonotonicTimestamp,
    Outcome,
    Transaction,
    UnknownActionKind,
    UnknownOutcome,
    parse_anchors,
    parse_segments,
    parse_transactions,
    write_anchors,
    write_transactions,
)

HEADER = "student_id,session_id,timestamp_ms,action,step_id,outcome\n"


def _write(tmp_path, body, name="t.csv"):
    path = tmp_path / name
    path.write_text(HEADER + body, encoding="utf-8")
    return path


class TestTransactions:
    def test_hint_outcome_forced_incorrect(self, tmp_path):
        path = _write(
            tmp_path,
            "s1,a,1000,ATTEMPT,st1,CORRECT\n"
            "s1,a,2000,HINT,st1,\n"
            "s1,a,3000,ATTEMPT,st2,INCORRECT\n",
        )
        records = parse_transactions(path)
        assert len(records) == 3
        assert records[1].kind is ActionKind.HINT
        assert records[1].outcome is Outcome.INCORRECT

    def test_empty_data_section(self, tmp_path):
        with pytest.raises(EmptyFile):
            parse_transactions(_write(tmp_path, ""))

    def test_non_monotonic_timestamps(self, tmp_path):
        path = _write(
            tmp_path,
            "s1,a,2000,ATTEMPT,st1,CORRECT\n"
            "s1,a,1000,ATTEMPT,st2,CORRECT\n",
        )
        with pytest.raises(NonMonotonicTimestamp) as err:
            parse_transactions(path)
        assert err.value.session_id == "a"

    def test_interleaved_sessions_monotone_within_each(self, tmp_path):
        path = _write(
            tmp_path,
            "s1,a,2000,ATTEMPT,st1,CORRECT\n"
            "s2,b,1000,ATTEMPT,st1,INCORRECT\n"
            "s1,a,3000,ATTEMPT,st2,CORRECT\n",
        )
        records = parse_transactions(path)
        assert [(t.session_id, t.timestamp) for t in records] == [
            ("a", 2000), ("a", 3000), ("b", 1000),
        ]

    def test_unknown_action(self, tmp_path):
        with pytest.raises(UnknownActionKind):
            parse_transactions(_write(tmp_path, "s1,a,1,GUESS,st1,CORRECT\n"))

    def test_unparseable_outcome_is_error_not_skip(self, tmp_path):
        with pytest.raises(UnknownOutcome):
            parse_transactions(_write(tmp_path, "s1,a,1,ATTEMPT,st1,MAYBE\n"))
        with pytest.raises(UnknownOutcome):
            parse_transactions(_write(tmp_path, "s1,a,1,ATTEMPT,st1,\n"))

    def test_header_mismatch(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("student,session\ns1,a\n", encoding="utf-8")
        with pytest.raises(MissingColumn):
            parse_transactions(path)

    def test_duplicate_timestamps_keep_input_order(self, tmp_path):
        path = _write(
            tmp_path,
            "s1,a,1000,ATTEMPT,first,CORRECT\n"
            "s1,a,1000,ATTEMPT,second,INCORRECT\n",
        )
        records = parse_transactions(path)
        assert [t.step_id for t in records] == ["first", "second"]

    def test_hint_plus_attempt_counts_partition_rows(self, tmp_path):
        path = _write(
            tmp_path,
            "s1,a,1000,ATTEMPT,st1,CORRECT\n"
            "s1,a,2000,HINT,st1,\n"
            "s1,a,3000,HINT,st2,\n"
            "s1,a,4000,ATTEMPT,st2,INCORRECT\n",
        )
        records = parse_transactions(path)
        hints = sum(t.kind is ActionKind.HINT for t in records)
        attempts = sum(
            t.kind is ActionKind.ATTEMPT
            and t.outcome in (Outcome.CORRECT, Outcome.INCORRECT)
            for t in records
        )
        assert hints + attempts == len(records)

    session_ids = st.sampled_from(["a", "b", "c"])

    @given(st.lists(
        st.tuples(session_ids, st.integers(0, 5),
                  st.sampled_from(["ATTEMPT", "HINT"]),
                  st.booleans()),
        min_size=1, max_size=40,
    ))
    def test_round_trip(self, rows):
        import tempfile
        from pathlib import Path

        by_session: dict[str, int] = {}
        lines = []
        for session, gap, action, correct in rows:
            ts = by_session.get(session, 0) + gap
            by_session[session] = ts
            outcome = "" if action == "HINT" else ("CORRECT" if correct else "INCORRECT")
            lines.append(f"stu_{session},{session},{ts},{action},step,{outcome}\n")
        with tempfile.TemporaryDirectory() as tmp:
            parsed = parse_transactions(_write(Path(tmp), "".join(lines)))
            out = Path(tmp) / "rewritten.csv"
            write_transactions(out, parsed)
            assert parse_transactions(out) == parsed


class TestSegments:
    def test_single_segment(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps(
            {"session_id": "a", "segments": [{"start": 0.0, "end": 2.0, "text": "ok"}]}
        ), encoding="utf-8")
        segments = parse_segments(path)
        assert len(segments) == 1
        assert segments[0].session_id == "a"
        assert segments[0].text == "ok"

    def test_negative_duration(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps(
            {"session_id": "a", "segments": [{"start": 3.0, "end": 2.0, "text": "x"}]}
        ), encoding="utf-8")
        with pytest.raises(NegativeDuration):
            parse_segments(path)

    def test_sorted_by_start(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"session_id": "a", "segments": [
            {"start": 5.0, "end": 6.0, "text": "later"},
            {"start": 1.0, "end": 2.0, "text": "earlier"},
        ]}), encoding="utf-8")
        segments = parse_segments(path)
        assert [s.text for s in segments] == ["earlier", "later"]

    def test_malformed_segment_carries_index(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"session_id": "a", "segments": [
            {"start": 0.0, "end": 1.0, "text": "fine"},
            {"start": 2.0, "text": "missing end"},
        ]}), encoding="utf-8")
        with pytest.raises(MalformedSegment) as err:
            parse_segments(path)
        assert err.value.index == 1

    def test_empty_text_allowed(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps(
            {"session_id": "a", "segments": [{"start": 0.0, "end": 0.0, "text": ""}]}
        ), encoding="utf-8")
        assert parse_segments(path)[0].text == ""


class TestAnchors:
    def test_round_trip_and_uniqueness(self, tmp_path):
        from srltrace.ingest import SyncAnchor

        path = tmp_path / "anchors.csv"
        write_anchors(path, [SyncAnchor("a", 1_000_000, 120.0)])
        anchors = parse_anchors(path)
        assert anchors["a"].tutor_timestamp == 1_000_000
        assert anchors["a"].recording_time == 120.0

    def test_duplicate_anchor_rejected(self, tmp_path):
        path = tmp_path / "anchors.csv"
        path.write_text(
            "session_id,tutor_timestamp_ms,recording_time_s\n"
            "a,1000,1.0\na,2000,2.0\n",
            encoding="utf-8",
        )
        with pytest.raises(Exception):
            parse_anchors(path)
