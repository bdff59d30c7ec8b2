"""Parsers for tutor transaction logs, transcript segments, and sync anchors.

Transactions arrive as CSV with the canonical header
``student_id,session_id,timestamp_ms,action,step_id,outcome``; transcript
segments as per-session JSON mirroring common speech-to-text output. All
parsers validate eagerly: unparseable rows are errors, never silent skips,
since dropped rows would bias downstream correctness rates.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from srltrace.errors import SrlTraceError

TRANSACTIONS_HEADER = [
    "student_id", "session_id", "timestamp_ms", "action", "step_id", "outcome",
]

ANCHORS_HEADER = ["session_id", "tutor_timestamp_ms", "recording_time_s"]


class MissingColumn(SrlTraceError):
    """The CSV header does not match the documented schema."""


class NonMonotonicTimestamp(SrlTraceError):
    """Timestamps decrease within one session."""

    def __init__(self, session_id: str, row: int):
        self.session_id = session_id
        self.row = row
        super().__init__(
            f"timestamps decrease within session {session_id!r} at data row {row}"
        )


class UnknownActionKind(SrlTraceError):
    """Action value outside {ATTEMPT, HINT}."""


class UnknownOutcome(SrlTraceError):
    """Outcome value outside {CORRECT, INCORRECT} (or empty on a non-hint row)."""


class EmptyFile(SrlTraceError):
    """A file with a valid header but no data rows."""


class MalformedSegment(SrlTraceError):
    """A segment object is missing fields or has wrongly typed values."""

    def __init__(self, index: int, detail: str):
        self.index = index
        super().__init__(f"segment {index}: {detail}")


class NegativeDuration(SrlTraceError):
    """A segment ends before it starts."""

    def __init__(self, index: int, start: float, end: float):
        self.index = index
        super().__init__(f"segment {index}: end {end} < start {start}")


class ActionKind(enum.Enum):
    ATTEMPT = "ATTEMPT"
    HINT = "HINT"


class Outcome(enum.Enum):
    CORRECT = "CORRECT"
    INCORRECT = "INCORRECT"


@dataclass(frozen=True)
class Transaction:
    """One timestamped tutor action with its correctness outcome.

    Hint requests count as evidence of not knowing the step, so parsing
    forces their outcome to INCORRECT.
    """

    student_id: str
    session_id: str
    timestamp: int
    kind: ActionKind
    step_id: str
    outcome: Outcome


@dataclass(frozen=True)
class UtteranceSegment:
    """One raw transcript segment on the recording clock (seconds)."""

    session_id: str
    start: float
    end: float
    text: str


@dataclass(frozen=True)
class SyncAnchor:
    """Reference pair mapping one recording time to one tutor timestamp."""

    session_id: str
    tutor_timestamp: int
    recording_time: float


def parse_transactions(path: str | Path, format: str = "csv") -> list[Transaction]:
    """Parse and validate a transaction log.

    Returns records sorted by (session_id, timestamp); the sort is stable,
    so same-millisecond events keep their input order. Raises on header
    mismatch, empty data section, unknown action or outcome values, and
    timestamps that decrease within a session.
    """
    if format != "csv":
        raise ValueError(f"unsupported transactions format {format!r}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRANSACTIONS_HEADER:
            raise MissingColumn(
                f"{path}: header must be {','.join(TRANSACTIONS_HEADER)}, "
                f"got {header}"
            )
        records: list[Transaction] = []
        last_ts: dict[str, int] = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 6:
                raise MissingColumn(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            student_id, session_id, ts_raw, action, step_id, outcome_raw = row
            try:
                timestamp = int(ts_raw)
            except ValueError:
                raise MissingColumn(
                    f"{path}:{lineno}: timestamp_ms must be an integer, got {ts_raw!r}"
                ) from None
            try:
                kind = ActionKind(action)
            except ValueError:
                raise UnknownActionKind(
                    f"{path}:{lineno}: action must be ATTEMPT or HINT, got {action!r}"
                ) from None
            if kind is ActionKind.HINT:
                outcome = Outcome.INCORRECT
            elif outcome_raw in ("CORRECT", "INCORRECT"):
                outcome = Outcome(outcome_raw)
            else:
                raise UnknownOutcome(
                    f"{path}:{lineno}: outcome must be CORRECT or INCORRECT "
                    f"on an ATTEMPT row, got {outcome_raw!r}"
                )
            prev = last_ts.get(session_id)
            if prev is not None and timestamp < prev:
                raise NonMonotonicTimestamp(session_id, lineno - 1)
            last_ts[session_id] = timestamp
            records.append(
                Transaction(student_id, session_id, timestamp, kind, step_id, outcome)
            )
    if not records:
        raise EmptyFile(f"{path}: no data rows")
    records.sort(key=lambda t: (t.session_id, t.timestamp))
    return records


def write_transactions(path: str | Path, records: Iterable[Transaction]) -> None:
    """Write transactions in the canonical CSV format.

    Hint rows get an empty outcome field, which parse_transactions maps back
    to INCORRECT, so write-then-parse round-trips parsed records exactly.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRANSACTIONS_HEADER)
        for t in records:
            outcome = "" if t.kind is ActionKind.HINT else t.outcome.value
            writer.writerow(
                [t.student_id, t.session_id, str(t.timestamp),
                 t.kind.value, t.step_id, outcome]
            )


def parse_segments(path: str | Path, format: str = "json") -> list[UtteranceSegment]:
    """Parse one session's transcript segments from JSON.

    Expects ``{"session_id": s, "segments": [{"start", "end", "text"}, ...]}``.
    Returns segments sorted by start time; enforces end >= start.
    """
    if format != "json":
        raise ValueError(f"unsupported segments format {format!r}")
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MalformedSegment(-1, f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "session_id" not in doc or "segments" not in doc:
        raise MalformedSegment(-1, f"{path}: need session_id and segments keys")
    session_id = str(doc["session_id"])
    raw = doc["segments"]
    if not isinstance(raw, list):
        raise MalformedSegment(-1, f"{path}: segments must be an array")
    segments: list[UtteranceSegment] = []
    for i, obj in enumerate(raw):
        if not isinstance(obj, dict):
            raise MalformedSegment(i, "not an object")
        try:
            start = float(obj["start"])
            end = float(obj["end"])
            text = str(obj["text"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedSegment(i, f"bad fields: {exc}") from None
        if end < start:
            raise NegativeDuration(i, start, end)
        segments.append(UtteranceSegment(session_id, start, end, text))
    segments.sort(key=lambda s: s.start)
    return segments


def parse_segment_dir(path: str | Path) -> dict[str, list[UtteranceSegment]]:
    """Parse every ``*.json`` session file in a directory, keyed by session."""
    path = Path(path)
    out: dict[str, list[UtteranceSegment]] = {}
    for f in sorted(path.glob("*.json")):
        segs = parse_segments(f)
        if segs:
            out[segs[0].session_id] = segs
        else:
            # Session id lives in the document even when the array is empty.
            with f.open(encoding="utf-8") as fh:
                out[str(json.load(fh)["session_id"])] = []
    return out


def parse_anchors(path: str | Path) -> dict[str, SyncAnchor]:
    """Parse the per-session sync anchors CSV; exactly one anchor per session."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ANCHORS_HEADER:
            raise MissingColumn(
                f"{path}: header must be {','.join(ANCHORS_HEADER)}, got {header}"
            )
        anchors: dict[str, SyncAnchor] = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise MissingColumn(f"{path}:{lineno}: expected 3 fields")
            session_id, tutor_ms, rec_s = row
            if session_id in anchors:
                raise SrlTraceError(
                    f"{path}:{lineno}: duplicate anchor for session {session_id!r}"
                )
            anchors[session_id] = SyncAnchor(session_id, int(tutor_ms), float(rec_s))
    if not anchors:
        raise EmptyFile(f"{path}: no anchors")
    return anchors


def write_anchors(path: str | Path, anchors: Iterable[SyncAnchor]) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ANCHORS_HEADER)
        for a in anchors:
            writer.writerow([a.session_id, str(a.tutor_timestamp), repr(a.recording_time)])
