"""Synthetic session generator with known ground truth.

Each student gets a Gaussian random intercept; utterance code patterns walk
a Markov chain whose stationary distribution mimics the observed per-code
presence rates (roughly 15/11/22/6 percent with 57 percent uncoded); cycle
features are computed with the analyzer's own state-machine semantics, and
attempt outcomes are Bernoulli draws from the logistic model. Output files
are byte-identical across runs for a fixed seed, which makes the generator
usable as an end-to-end oracle for the whole pipeline.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from srltrace import coding, cycles, ingest
from srltrace.errors import SrlTraceError

BETA_KEYS = (
    "intercept", "f_process", "f_plan", "f_act", "f_error",
    "in_loop", "n_unclosed_since", "attempts_per_cycle",
)

DEFAULT_PATTERNS: tuple[frozenset[str], ...] = (
    frozenset(),
    frozenset({"process"}),
    frozenset({"process", "plan"}),
    frozenset({"process", "act"}),
    frozenset({"plan"}),
    frozenset({"plan", "act"}),
    frozenset({"act"}),
    frozenset({"act", "error"}),
    frozenset({"error"}),
)

# Stationary mass per pattern; solves the per-code presence targets
# process .15, plan .11, act .22, error .06, none .57.
DEFAULT_STATIONARY = (0.57, 0.09, 0.05, 0.01, 0.03, 0.03, 0.16, 0.02, 0.04)

DEFAULT_BETA = {
    "intercept": math.log(0.71),
    "f_process": math.log(0.53),
    "f_plan": math.log(1.05),
    "f_act": math.log(1.55),
    "f_error": math.log(0.34),
    "in_loop": math.log(0.79),
    "n_unclosed_since": 0.08,
    "attempts_per_cycle": 0.10,
}

DEFAULT_VOCAB = (
    "so", "the", "we", "need", "to", "convert", "moles", "grams", "of",
    "this", "answer", "is", "per", "unit", "times", "divide", "by", "that",
    "gives", "us", "first", "then", "check", "value", "number", "result",
    "formula", "mass", "balance", "equation", "step", "next", "okay",
    "wait", "let", "me", "see", "should", "be", "right",
)


class InvalidConfig(SrlTraceError):
    """A simulation config violates its invariants."""


@dataclass(frozen=True)
class PlantedToken:
    """A token injected into utterances preceding one outcome class."""

    token: str
    occurrences: int
    before: str = "incorrect"

    def __post_init__(self) -> None:
        if self.before not in ("correct", "incorrect"):
            raise InvalidConfig(f"before must be correct|incorrect, got {self.before!r}")
        if self.occurrences < 0:
            raise InvalidConfig("occurrences must be >= 0")


@dataclass(frozen=True)
class VocabSpec:
    """Token sampler: base vocabulary plus planted outcome-linked tokens."""

    base_tokens: tuple[str, ...] = DEFAULT_VOCAB
    words_per_segment: tuple[int, int] = (3, 9)
    planted: tuple[PlantedToken, ...] = ()


@dataclass(frozen=True)
class CodeMarkov:
    """Markov chain over utterance code patterns."""

    patterns: tuple[frozenset[str], ...] = DEFAULT_PATTERNS
    matrix: tuple[tuple[float, ...], ...] = ()
    initial: tuple[float, ...] = DEFAULT_STATIONARY

    def __post_init__(self) -> None:
        if not self.matrix:
            # Sticky resampling of the stationary distribution: rho * I +
            # (1 - rho) * 1 pi^T keeps pi stationary with mild persistence.
            rho = 0.2
            pi = self.initial
            matrix = tuple(
                tuple(
                    (rho if i == j else 0.0) + (1.0 - rho) * pi[j]
                    for j in range(len(pi))
                )
                for i in range(len(pi))
            )
            object.__setattr__(self, "matrix", matrix)
        if len(self.matrix) != len(self.patterns):
            raise InvalidConfig("transition matrix size != number of patterns")
        for i, row in enumerate(self.matrix):
            if len(row) != len(self.patterns):
                raise InvalidConfig(f"transition row {i} has wrong length")
            if abs(sum(row) - 1.0) > 1e-9:
                raise InvalidConfig(f"transition row {i} does not sum to 1")
            if any(x < 0 for x in row):
                raise InvalidConfig(f"transition row {i} has negative mass")
        if abs(sum(self.initial) - 1.0) > 1e-9:
            raise InvalidConfig("initial distribution does not sum to 1")


@dataclass(frozen=True)
class SimConfig:
    n_students: int = 100
    attempts_per_student: int = 30
    sigma: float = 0.8
    beta: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_BETA))
    code_markov: CodeMarkov = field(default_factory=CodeMarkov)
    vocab: VocabSpec = field(default_factory=VocabSpec)
    hint_share_of_incorrect: float = 0.15
    seed: int = 23

    def __post_init__(self) -> None:
        if self.n_students < 1 or self.attempts_per_student < 1:
            raise InvalidConfig("need at least one student and one attempt")
        if self.sigma < 0:
            raise InvalidConfig("sigma must be >= 0")
        if set(self.beta) != set(BETA_KEYS):
            raise InvalidConfig(f"beta must have exactly the keys {BETA_KEYS}")
        if not 0.0 <= self.hint_share_of_incorrect <= 1.0:
            raise InvalidConfig("hint_share_of_incorrect must be in [0, 1]")


@dataclass(frozen=True)
class SimBundle:
    """File paths plus the in-memory ground truth for tests."""

    out_dir: Path
    transactions_path: Path
    segments_dir: Path
    anchors_path: Path
    codes_path: Path
    truth_path: Path
    truth: dict


_FIRST_ACTION_MS = 60_000
_ACTION_GAP_MS = 10_000


def _student_ids(i: int) -> tuple[str, str]:
    return f"st{i:03d}", f"sess{i:03d}"


def _draw_patterns(rng: np.random.Generator, chain: CodeMarkov, n: int) -> list[int]:
    top = len(chain.patterns) - 1
    cum_rows = np.cumsum(np.asarray(chain.matrix), axis=1)
    cum_init = np.cumsum(np.asarray(chain.initial))
    draws = rng.random(n)
    state = min(int(np.searchsorted(cum_init, draws[0], side="right")), top)
    out = [state]
    for u in draws[1:]:
        state = min(int(np.searchsorted(cum_rows[state], u, side="right")), top)
        out.append(state)
    return out


def _pattern_codes(session: str, k: int, pattern: frozenset[str]) -> coding.SrlCodes:
    return coding.SrlCodes(
        utterance_id=f"{session}#{k}",
        coder_id="sim",
        process="process" in pattern,
        plan="plan" in pattern,
        act="act" in pattern,
        error="error" in pattern,
    )


def _stream(cfg: SimConfig, *key: int) -> np.random.Generator:
    """A deterministic generator for one (student, purpose) substream.

    Separate substreams keep the ground-truth features identical between
    simulate() and simulate_features() even though only the former draws
    transcript noise.
    """
    return np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=key))


def _student_features(
    cfg: SimConfig, beta: np.ndarray, i: int
) -> tuple[str, str, list[coding.SrlCodes], list[tuple[bool, int, float]], np.ndarray]:
    """Draw one student's codes, cycle features, and outcomes."""
    rng = _stream(cfg, i, 0)
    student, session = _student_ids(i)
    b_i = rng.normal(0.0, cfg.sigma) if cfg.sigma > 0 else 0.0
    pattern_idx = _draw_patterns(rng, cfg.code_markov, cfg.attempts_per_student)
    codes_stream = [
        _pattern_codes(session, k, cfg.code_markov.patterns[j])
        for k, j in enumerate(pattern_idx)
    ]
    trace = cycles.trace_features(codes_stream)
    x = np.array([
        [1.0, float(c.process), float(c.plan), float(c.act), float(c.error),
         float(in_loop), float(n_unclosed), apc]
        for c, (in_loop, n_unclosed, apc) in zip(codes_stream, trace)
    ])
    p = expit(x @ beta + b_i)
    y = (rng.random(cfg.attempts_per_student) < p).astype(int)
    return student, session, codes_stream, trace, y


def simulate_features(cfg: SimConfig) -> list[dict]:
    """Ground-truth feature rows only, skipping transcript and file output.

    Used for replicate simulation studies where only the modeling table
    matters; the row schema matches simulate()'s ground-truth features.
    """
    beta = np.array([cfg.beta[k] for k in BETA_KEYS])
    rows: list[dict] = []
    for i in range(cfg.n_students):
        student, session, codes_stream, trace, y = _student_features(cfg, beta, i)
        for k, (codes, (in_loop, n_unclosed, apc)) in enumerate(
            zip(codes_stream, trace)
        ):
            rows.append({
                "student_id": student,
                "session_id": session,
                "attempt_index": k,
                "outcome": int(y[k]),
                "f_process": int(codes.process),
                "f_plan": int(codes.plan),
                "f_act": int(codes.act),
                "f_error": int(codes.error),
                "loop_state": int(in_loop),
                "n_unclosed_since": n_unclosed,
                "attempts_per_cycle": apc,
            })
    return rows


def simulate(cfg: SimConfig, out_dir: str | Path) -> SimBundle:
    """Generate one synthetic bundle under ``out_dir``.

    Emits transactions.csv, segments/<session>.json, anchors.csv, codes.csv,
    and ground_truth.json. The ground-truth feature matrix is produced by
    the same state-machine semantics the analyzer uses, so replaying the
    files through the pipeline must reproduce it exactly.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    segments_dir = out_dir / "segments"
    segments_dir.mkdir(exist_ok=True)

    beta = np.array([cfg.beta[k] for k in BETA_KEYS])

    transactions: list[ingest.Transaction] = []
    anchors: list[ingest.SyncAnchor] = []
    all_codes: list[coding.SrlCodes] = []
    truth_rows: list[dict] = []
    # Per-utterance segment text is built first; planted tokens are appended
    # once outcomes are known.
    session_segments: dict[str, list[dict]] = {}
    utterance_slots: list[tuple[str, int, int]] = []  # (session, k, outcome)

    for i in range(cfg.n_students):
        student, session, codes_stream, trace, y_vec = _student_features(
            cfg, beta, i
        )
        rng = _stream(cfg, i, 1)
        hint_draws = rng.random(cfg.attempts_per_student)

        # Recording clock offset differs per session; anchor at first action.
        recording_at_first = float(30 + (i % 7)) + 0.25 * (i % 3)
        anchors.append(
            ingest.SyncAnchor(session, _FIRST_ACTION_MS, recording_at_first)
        )
        offset = _FIRST_ACTION_MS - round(recording_at_first * 1000)

        segments: list[dict] = []
        for k, (codes, (in_loop, n_unclosed, apc)) in enumerate(
            zip(codes_stream, trace)
        ):
            y = int(y_vec[k])
            t_k = _FIRST_ACTION_MS + k * _ACTION_GAP_MS
            if y == 1:
                kind, outcome = ingest.ActionKind.ATTEMPT, ingest.Outcome.CORRECT
            elif hint_draws[k] < cfg.hint_share_of_incorrect:
                kind, outcome = ingest.ActionKind.HINT, ingest.Outcome.INCORRECT
            else:
                kind, outcome = ingest.ActionKind.ATTEMPT, ingest.Outcome.INCORRECT
            transactions.append(
                ingest.Transaction(student, session, t_k, kind,
                                   f"step{k % 8:02d}", outcome)
            )
            all_codes.append(codes)
            truth_rows.append({
                "student_id": student,
                "session_id": session,
                "attempt_index": k,
                "outcome": y,
                "f_process": int(codes.process),
                "f_plan": int(codes.plan),
                "f_act": int(codes.act),
                "f_error": int(codes.error),
                "loop_state": int(in_loop),
                "n_unclosed_since": n_unclosed,
                "attempts_per_cycle": apc,
            })

            # Think-aloud segments in the window before action k. Coded
            # utterances always get speech; uncoded windows sometimes stay
            # silent, which exercises empty combined utterances.
            window_lo = t_k - _ACTION_GAP_MS + 400
            n_segs = 0
            if codes.process or codes.plan or codes.act or codes.error:
                n_segs = int(rng.integers(1, 3))
            elif rng.random() < 0.55:
                n_segs = 1
            for s in range(n_segs):
                start_ms = window_lo + int(rng.integers(0, 3000)) + s * 3000
                start_ms = min(start_ms, t_k - 200)
                dur = int(rng.integers(600, 2800))
                n_words = int(rng.integers(*cfg.vocab.words_per_segment))
                words = rng.choice(len(cfg.vocab.base_tokens), size=n_words)
                segments.append({
                    "start": (start_ms - offset) / 1000.0,
                    "end": (start_ms + dur - offset) / 1000.0,
                    "text": " ".join(cfg.vocab.base_tokens[w] for w in words),
                })
            utterance_slots.append((session, k, y))

        # An occasional trailing segment after the final action; the
        # combiner discards these.
        if rng.random() < 0.3:
            t_last = _FIRST_ACTION_MS + (cfg.attempts_per_student - 1) * _ACTION_GAP_MS
            segments.append({
                "start": (t_last + 500 - offset) / 1000.0,
                "end": (t_last + 1500 - offset) / 1000.0,
                "text": "done i think",
            })
        session_segments[session] = segments

    _plant_tokens(cfg, _stream(cfg, 0, 2), session_segments, utterance_slots,
                  anchors)

    transactions_path = out_dir / "transactions.csv"
    ingest.write_transactions(transactions_path, transactions)
    anchors_path = out_dir / "anchors.csv"
    ingest.write_anchors(anchors_path, anchors)
    codes_path = out_dir / "codes.csv"
    coding.write_codes(codes_path, all_codes)
    for session, segs in session_segments.items():
        doc = {"session_id": session, "segments": segs}
        with (segments_dir / f"{session}.json").open("w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
            fh.write("\n")

    truth = {
        "seed": cfg.seed,
        "sigma": cfg.sigma,
        "beta": {k: cfg.beta[k] for k in BETA_KEYS},
        "n_students": cfg.n_students,
        "attempts_per_student": cfg.attempts_per_student,
        "features": truth_rows,
    }
    truth_path = out_dir / "ground_truth.json"
    with truth_path.open("w", encoding="utf-8") as fh:
        json.dump(truth, fh, sort_keys=True, indent=1)
        fh.write("\n")

    return SimBundle(
        out_dir=out_dir,
        transactions_path=transactions_path,
        segments_dir=segments_dir,
        anchors_path=anchors_path,
        codes_path=codes_path,
        truth_path=truth_path,
        truth=truth,
    )


def _plant_tokens(
    cfg: SimConfig,
    rng: np.random.Generator,
    session_segments: dict[str, list[dict]],
    utterance_slots: list[tuple[str, int, int]],
    anchors: list[ingest.SyncAnchor],
) -> None:
    """Append planted tokens to utterances preceding the target outcome."""
    if not cfg.vocab.planted:
        return
    offsets = {
        a.session_id: a.tutor_timestamp - round(a.recording_time * 1000)
        for a in anchors
    }
    for plant in cfg.vocab.planted:
        eligible = [
            (session, k) for session, k, y in utterance_slots
            if (plant.before == "correct") == (y == 1)
        ]
        if len(eligible) < plant.occurrences:
            raise InvalidConfig(
                f"cannot plant {plant.occurrences} x {plant.token!r}: only "
                f"{len(eligible)} eligible utterances"
            )
        chosen = rng.choice(len(eligible), size=plant.occurrences, replace=False)
        for idx in sorted(int(c) for c in chosen):
            session, k = eligible[idx]
            segs = session_segments[session]
            window_hi = _FIRST_ACTION_MS + k * _ACTION_GAP_MS
            window_lo = window_hi - _ACTION_GAP_MS
            offset = offsets[session]
            in_window = [
                s for s in segs
                if window_lo <= round(s["start"] * 1000) + offset < window_hi
            ]
            if in_window:
                in_window[-1]["text"] += f" {plant.token}"
            else:
                start_ms = window_hi - 1200
                segs.append({
                    "start": (start_ms - offset) / 1000.0,
                    "end": (start_ms + 800 - offset) / 1000.0,
                    "text": plant.token,
                })
                segs.sort(key=lambda s: s["start"])
