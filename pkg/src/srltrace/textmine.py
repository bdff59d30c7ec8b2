"""Chi-square unigram mining over combined utterances.

Tokens are compared between utterances preceding correct and incorrect
attempts: each token's occurrence counts form a 2x2 table against all other
token occurrences, tested with the uncorrected Pearson statistic and
adjusted across the vocabulary with Benjamini-Hochberg.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from srltrace.errors import SrlTraceError
from srltrace.stats import Table2x2, ZeroMargin, bh_adjust, chi2_2x2

UNIGRAMS_HEADER = ["token", "n_correct", "n_incorrect", "chi2", "p_raw", "bh_rejected"]

_SEPARATOR = re.compile(r"[^a-z0-9]+")
_APOSTROPHES = re.compile(r"['’]")


class NoUtterances(SrlTraceError):
    """Mining called with an empty corpus."""


@dataclass(frozen=True)
class UnigramRecord:
    """Occurrence counts and test result for one token."""

    token: str
    n_correct: int
    n_incorrect: int
    chi2: float
    p_raw: float
    bh_rejected: bool
    correct_indicative: bool


@dataclass(frozen=True)
class MiningResult:
    """Tested unigrams plus the tallies needed for count accounting.

    ``records`` lists correct-indicative tokens first, each block sorted by
    chi2 descending then token; ``n_filtered_occurrences`` counts token
    occurrences dropped by the min_count floor and
    ``n_skipped_zero_margin`` the tokens untestable for margin reasons.
    """

    records: tuple[UnigramRecord, ...]
    n_tested: int
    n_skipped_zero_margin: int
    skipped_occurrences: int
    n_filtered_tokens: int
    n_filtered_occurrences: int
    total_occurrences: int


def tokenize(text: str, punctuation: str = "separate") -> list[str]:
    """Lowercase and split on every character outside [a-z0-9].

    ``punctuation="delete"`` removes apostrophes before splitting (so
    "what's" becomes "whats" instead of "what", "s"); everything else is
    always a separator. Empty tokens are dropped.
    """
    if punctuation not in ("separate", "delete"):
        raise ValueError(f"punctuation must be 'separate' or 'delete', got {punctuation!r}")
    lowered = text.lower()
    if punctuation == "delete":
        lowered = _APOSTROPHES.sub("", lowered)
    return [tok for tok in _SEPARATOR.split(lowered) if tok]


def mine_unigrams(
    texts: Sequence[str],
    outcomes: Sequence[bool | int],
    min_count: int = 2,
    q: float = 0.05,
    punctuation: str = "separate",
) -> MiningResult:
    """Mine unigrams that distinguish correct- from incorrect-preceding text.

    Every utterance must map to exactly one following-attempt outcome.
    Counts are token occurrences, not document presence; the 2x2 framing is
    (this token vs all other token occurrences) x (correct vs incorrect).
    Tokens below ``min_count`` total occurrences are filtered (tallied);
    tokens whose table has an empty margin are skipped (tallied).
    """
    if len(texts) == 0:
        raise NoUtterances("no utterances to mine")
    if len(texts) != len(outcomes):
        raise SrlTraceError(
            f"{len(texts)} utterances vs {len(outcomes)} outcomes"
        )

    counts: dict[str, list[int]] = {}
    for text, outcome in zip(texts, outcomes):
        col = 0 if outcome else 1
        for tok in tokenize(text, punctuation):
            counts.setdefault(tok, [0, 0])[col] += 1

    total_correct = sum(c for c, _ in counts.values())
    total_incorrect = sum(i for _, i in counts.values())
    total = total_correct + total_incorrect

    tested: list[tuple[str, int, int, float, float]] = []
    n_filtered_tokens = 0
    n_filtered_occurrences = 0
    n_skipped = 0
    skipped_occurrences = 0
    for tok in sorted(counts):
        n_c, n_i = counts[tok]
        if n_c + n_i < min_count:
            n_filtered_tokens += 1
            n_filtered_occurrences += n_c + n_i
            continue
        table = Table2x2(n_c, n_i, total_correct - n_c, total_incorrect - n_i)
        try:
            stat, _, p_raw = chi2_2x2(table)
        except ZeroMargin:
            n_skipped += 1
            skipped_occurrences += n_c + n_i
            continue
        tested.append((tok, n_c, n_i, stat, p_raw))

    adjusted = bh_adjust([p for *_, p in tested], q=q) if tested else []

    expected_share = total_correct / total if total else 0.0
    records = []
    for (tok, n_c, n_i, stat, p_raw), bh in zip(tested, adjusted):
        records.append(
            UnigramRecord(
                token=tok,
                n_correct=n_c,
                n_incorrect=n_i,
                chi2=stat,
                p_raw=p_raw,
                bh_rejected=bh.rejected,
                correct_indicative=n_c / (n_c + n_i) > expected_share,
            )
        )
    records.sort(key=lambda r: (not r.correct_indicative, -r.chi2, r.token))
    return MiningResult(
        records=tuple(records),
        n_tested=len(tested),
        n_skipped_zero_margin=n_skipped,
        skipped_occurrences=skipped_occurrences,
        n_filtered_tokens=n_filtered_tokens,
        n_filtered_occurrences=n_filtered_occurrences,
        total_occurrences=total,
    )


def write_unigrams(path: str | Path, result: MiningResult) -> None:
    """Write the unigram report CSV (token,counts,chi2,p,bh_rejected)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(UNIGRAMS_HEADER)
        for r in result.records:
            writer.writerow([
                r.token, str(r.n_correct), str(r.n_incorrect),
                repr(r.chi2), repr(r.p_raw), str(int(r.bh_rejected)),
            ])
