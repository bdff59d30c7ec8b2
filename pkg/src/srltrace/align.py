"""Clock synchronization and utterance windowing.

The recording clock is mapped onto the tutor clock through one reference
anchor per session, then every transcript segment is assigned, by its start
time, to the window before the next tutor action. Each action gets exactly
one combined utterance (possibly empty); segments after the final action are
discarded and counted.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from srltrace.errors import SrlTraceError
from srltrace.ingest import SyncAnchor, Transaction, UtteranceSegment

logger = logging.getLogger(__name__)

UTTERANCES_HEADER = [
    "utterance_id", "session_id", "next_action_index", "text", "segment_count",
]


class AnchorSessionMismatch(SrlTraceError):
    """The anchor belongs to a different session than the segments."""


class UnsortedInput(SrlTraceError):
    """Segments or transactions are not sorted by time."""


class SessionMismatch(SrlTraceError):
    """Segments and transactions come from different sessions."""


@dataclass(frozen=True)
class SyncedSegment:
    """A transcript segment remapped to integer tutor-clock milliseconds."""

    session_id: str
    start_ms: int
    end_ms: int
    text: str


@dataclass(frozen=True)
class CombinedUtterance:
    """All segment text falling in the window before one tutor action.

    ``utterance_id`` is "<session_id>#<k>" where k is the 0-based index of
    the action this utterance precedes. ``window`` is the pair
    (previous action index or None, next action index).
    """

    utterance_id: str
    session_id: str
    text: str
    segment_count: int
    window: tuple[int | None, int]


def synchronize(
    segments: Sequence[UtteranceSegment], anchor: SyncAnchor
) -> list[SyncedSegment]:
    """Map segment times from recording seconds to tutor milliseconds.

    offset = anchor.tutor_timestamp - round(anchor.recording_time * 1000);
    segment boundaries are rounded to whole milliseconds, which is well
    inside the <= 1 s error budget of the manual anchor annotation.
    """
    offset = anchor.tutor_timestamp - round(anchor.recording_time * 1000)
    out = []
    for seg in segments:
        if seg.session_id != anchor.session_id:
            raise AnchorSessionMismatch(
                f"segment session {seg.session_id!r} != anchor session "
                f"{anchor.session_id!r}"
            )
        out.append(
            SyncedSegment(
                session_id=seg.session_id,
                start_ms=round(seg.start * 1000) + offset,
                end_ms=round(seg.end * 1000) + offset,
                text=seg.text,
            )
        )
    return out


def combine_windows(
    segments: Sequence[SyncedSegment], transactions: Sequence[Transaction]
) -> list[CombinedUtterance]:
    """Concatenate segments into one combined utterance per tutor action.

    A segment belongs to the window of the first action whose timestamp is
    strictly greater than the segment's start; a segment spanning an action
    boundary therefore joins the utterance before that action. Texts are
    joined with a single space in start-time order, with no normalization,
    so coders see the transcription verbatim. Segments starting at or after
    the final action are dropped (their count is logged).
    """
    if not transactions:
        return []
    session_id = transactions[0].session_id
    for t in transactions:
        if t.session_id != session_id:
            raise SessionMismatch(
                f"transactions mix sessions {session_id!r} and {t.session_id!r}"
            )
    for seg in segments:
        if seg.session_id != session_id:
            raise SessionMismatch(
                f"segment session {seg.session_id!r} != transaction session "
                f"{session_id!r}"
            )
    if any(b.timestamp < a.timestamp for a, b in zip(transactions, transactions[1:])):
        raise UnsortedInput("transactions not sorted by timestamp")
    if any(b.start_ms < a.start_ms for a, b in zip(segments, segments[1:])):
        raise UnsortedInput("segments not sorted by start time")

    n_actions = len(transactions)
    buckets: list[list[SyncedSegment]] = [[] for _ in range(n_actions)]
    discarded = 0
    k = 0
    for seg in segments:
        while k < n_actions and transactions[k].timestamp <= seg.start_ms:
            k += 1
        if k == n_actions:
            discarded += 1
        else:
            buckets[k].append(seg)
    if discarded:
        logger.info(
            "session %s: discarded %d segment(s) after the final action",
            session_id, discarded,
        )

    out = []
    for idx, bucket in enumerate(buckets):
        out.append(
            CombinedUtterance(
                utterance_id=f"{session_id}#{idx}",
                session_id=session_id,
                text=" ".join(seg.text for seg in bucket),
                segment_count=len(bucket),
                window=(idx - 1 if idx > 0 else None, idx),
            )
        )
    return out


def write_utterances(path: str | Path, utterances: Sequence[CombinedUtterance]) -> None:
    """Export combined utterances as the CSV coders annotate."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(UTTERANCES_HEADER)
        for u in utterances:
            writer.writerow(
                [u.utterance_id, u.session_id, str(u.window[1]), u.text,
                 str(u.segment_count)]
            )


def parse_utterances(path: str | Path) -> list[CombinedUtterance]:
    """Read back a combined-utterance CSV written by write_utterances."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != UTTERANCES_HEADER:
            raise SrlTraceError(
                f"{path}: utterances header must be {','.join(UTTERANCES_HEADER)}"
            )
        out = []
        for row in reader:
            uid, session_id, next_idx, text, seg_count = row
            k = int(next_idx)
            out.append(
                CombinedUtterance(
                    utterance_id=uid,
                    session_id=session_id,
                    text=text,
                    segment_count=int(seg_count),
                    window=(k - 1 if k > 0 else None, k),
                )
            )
    return out
