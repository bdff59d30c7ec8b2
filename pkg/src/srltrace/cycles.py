"""SRL loop state machine and the modeling feature table.

An SRL loop is initialized by an utterance carrying the process code and
closed once a plan and then an act code have followed. Codes inside a single
utterance apply in the canonical stage order process -> plan -> act, so one
utterance carrying all three opens and closes a loop by itself. The error
code never moves the machine.

Per attempt, the machine consumes the preceding utterance's codes first and
the attempt's loop state is read afterwards: a closure inside utterance k
makes attempt k out-of-loop. Both cycle features are 0 outside loops.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from srltrace.coding import SrlCodes
from srltrace.errors import SrlTraceError
from srltrace.ingest import ActionKind, Outcome, Transaction

FEATURES_HEADER = [
    "student_id", "session_id", "attempt_index", "outcome",
    "f_process", "f_plan", "f_act", "f_error",
    "loop_state", "n_unclosed_since", "attempts_per_cycle",
]


class LengthMismatch(SrlTraceError):
    """Utterance and action counts disagree for a session."""


class EmptyInput(SrlTraceError):
    """An operation that needs at least one row got none."""


class LoopState(enum.Enum):
    """OUT = no open loop; OPEN = process seen; READY = process then plan seen."""

    OUT = "OutOfLoop"
    OPEN = "Open"
    READY = "Ready"

    @property
    def in_loop(self) -> bool:
        return self is not LoopState.OUT


@dataclass(frozen=True)
class AttemptRow:
    """One modeling row: outcome, in-the-moment code flags, cycle features."""

    student_id: str
    session_id: str
    attempt_index: int
    outcome: int
    f_process: bool
    f_plan: bool
    f_act: bool
    f_error: bool
    in_loop: bool
    n_unclosed_since: int
    attempts_per_cycle: float


def advance(state: LoopState, codes: SrlCodes) -> tuple[LoopState, bool]:
    """Apply one utterance's codes to the machine; returns (state, closed).

    process opens a loop from OUT and is otherwise inert; plan promotes
    OPEN to READY; act closes a READY loop (closed=True); error is ignored.
    """
    closed = False
    if codes.process and state is LoopState.OUT:
        state = LoopState.OPEN
    if codes.plan and state is LoopState.OPEN:
        state = LoopState.READY
    if codes.act and state is LoopState.READY:
        state = LoopState.OUT
        closed = True
    return state, closed


@dataclass
class _CycleTracker:
    """Mutable per-student cycle bookkeeping shared across their sessions."""

    closed_loops: int = 0
    closed_loop_attempts: int = 0

    @property
    def attempts_per_cycle(self) -> float:
        if self.closed_loops == 0:
            return 0.0
        return self.closed_loop_attempts / self.closed_loops


def trace_features(
    code_stream: Sequence[SrlCodes],
    tracker: _CycleTracker | None = None,
    evaluate_before_codes: bool = False,
) -> list[tuple[bool, int, float]]:
    """Run the machine over one session's per-attempt code stream.

    Returns, per attempt, (in_loop, n_unclosed_since, attempts_per_cycle).
    ``evaluate_before_codes`` flips the tie-break so the attempt's loop state
    is read before its preceding utterance's codes are applied; the default
    applies codes first, so the closing verbalization ends the cycle.
    """
    tracker = tracker if tracker is not None else _CycleTracker()
    state = LoopState.OUT
    current_loop_attempts = 0
    out: list[tuple[bool, int, float]] = []

    def emit(in_loop: bool) -> None:
        nonlocal current_loop_attempts
        if in_loop:
            current_loop_attempts += 1
            out.append((True, current_loop_attempts, tracker.attempts_per_cycle))
        else:
            out.append((False, 0, 0.0))

    def fold_closed_loop() -> None:
        nonlocal current_loop_attempts
        tracker.closed_loops += 1
        tracker.closed_loop_attempts += current_loop_attempts
        current_loop_attempts = 0

    for codes in code_stream:
        if evaluate_before_codes:
            # The attempt sees the state left by earlier utterances; a
            # closure in its own utterance still counts it into the loop.
            emit(state.in_loop)
            state, closed = advance(state, codes)
            if closed:
                fold_closed_loop()
        else:
            state, closed = advance(state, codes)
            if closed:
                fold_closed_loop()
            emit(state.in_loop)
    return out


def extract_features(
    utterances_with_codes: Sequence[tuple[str, SrlCodes]],
    transactions: Sequence[Transaction],
    evaluate_before_codes: bool = False,
) -> list[AttemptRow]:
    """Build the feature table for a stream of (utterance codes, action) pairs.

    ``utterances_with_codes`` pairs each utterance id with its merged codes
    and must align 1:1 with ``transactions`` (utterance k precedes action k).
    Sessions are processed in input order; the state machine resets at every
    (student, session) boundary while the closed-loop average accumulates
    per student across their sessions.
    """
    if len(utterances_with_codes) != len(transactions):
        raise LengthMismatch(
            f"{len(utterances_with_codes)} utterances vs "
            f"{len(transactions)} actions"
        )

    rows: list[AttemptRow] = []
    trackers: dict[str, _CycleTracker] = {}
    i = 0
    n = len(transactions)
    while i < n:
        student = transactions[i].student_id
        session = transactions[i].session_id
        j = i
        while j < n and transactions[j].student_id == student \
                and transactions[j].session_id == session:
            j += 1
        session_codes = [codes for _, codes in utterances_with_codes[i:j]]
        tracker = trackers.setdefault(student, _CycleTracker())
        trace = trace_features(session_codes, tracker, evaluate_before_codes)
        for k, (t, codes, feats) in enumerate(
            zip(transactions[i:j], session_codes, trace)
        ):
            in_loop, n_unclosed, per_cycle = feats
            outcome = int(t.kind is ActionKind.ATTEMPT and t.outcome is Outcome.CORRECT)
            rows.append(
                AttemptRow(
                    student_id=student,
                    session_id=session,
                    attempt_index=k,
                    outcome=outcome,
                    f_process=codes.process,
                    f_plan=codes.plan,
                    f_act=codes.act,
                    f_error=codes.error,
                    in_loop=in_loop,
                    n_unclosed_since=n_unclosed,
                    attempts_per_cycle=per_cycle,
                )
            )
        i = j
    return rows


def pair_utterances_with_codes(
    utterance_ids: Sequence[str], merged: Mapping[str, SrlCodes]
) -> list[tuple[str, SrlCodes]]:
    """Attach merged codes to an ordered utterance id list; missing = all-false."""
    return [
        (uid, merged.get(uid, SrlCodes(utterance_id=uid, coder_id="")))
        for uid in utterance_ids
    ]


def describe(rows: Sequence[AttemptRow]) -> dict:
    """Per-code attempt counts and percentages plus the no-code tally.

    Codes are not mutually exclusive, so per-code counts may exceed the
    total; "none" counts only rows with all four flags false.
    """
    if not rows:
        raise EmptyInput("describe needs at least one attempt row")
    total = len(rows)
    counts = {
        "process": sum(r.f_process for r in rows),
        "plan": sum(r.f_plan for r in rows),
        "act": sum(r.f_act for r in rows),
        "error": sum(r.f_error for r in rows),
        "none": sum(
            not (r.f_process or r.f_plan or r.f_act or r.f_error) for r in rows
        ),
    }
    return {
        "n_attempts": total,
        "codes": {
            name: {"count": c, "percent": 100.0 * c / total}
            for name, c in counts.items()
        },
    }


def write_features(path: str | Path, rows: Iterable[AttemptRow]) -> None:
    """Write the feature-table CSV (loop_state as a 0/1 in-loop dummy)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FEATURES_HEADER)
        for r in rows:
            writer.writerow([
                r.student_id, r.session_id, str(r.attempt_index), str(r.outcome),
                str(int(r.f_process)), str(int(r.f_plan)), str(int(r.f_act)),
                str(int(r.f_error)), str(int(r.in_loop)),
                str(r.n_unclosed_since), repr(r.attempts_per_cycle),
            ])


def parse_features(path: str | Path) -> list[AttemptRow]:
    """Read back a feature-table CSV written by write_features."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FEATURES_HEADER:
            raise SrlTraceError(
                f"{path}: features header must be {','.join(FEATURES_HEADER)}"
            )
        rows = []
        for row in reader:
            rows.append(
                AttemptRow(
                    student_id=row[0],
                    session_id=row[1],
                    attempt_index=int(row[2]),
                    outcome=int(row[3]),
                    f_process=row[4] == "1",
                    f_plan=row[5] == "1",
                    f_act=row[6] == "1",
                    f_error=row[7] == "1",
                    in_loop=row[8] == "1",
                    n_unclosed_since=int(row[9]),
                    attempts_per_cycle=float(row[10]),
                )
            )
    return rows
