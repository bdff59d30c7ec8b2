"""SRL code schema, per-coder label merging, and inter-rater reliability.

Each combined utterance carries four independent binary codes: processing
information, planning, enacting, and realizing errors. The categories are
not mutually exclusive; any subset may be set on one utterance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from srltrace.errors import SrlTraceError

CATEGORIES = ("process", "plan", "act", "error")

CODES_HEADER = ["utterance_id", "coder_id", "process", "plan", "act", "error"]


class ConflictingLabelsWithoutPriority(SrlTraceError):
    """Two coders disagree on an utterance and no coder priority was given."""


class ItemSetMismatch(SrlTraceError):
    """The two coders did not label the identical utterance set."""


@dataclass(frozen=True)
class SrlCodes:
    """Four binary SRL labels for one utterance by one coder."""

    utterance_id: str
    coder_id: str
    process: bool = False
    plan: bool = False
    act: bool = False
    error: bool = False

    def flags(self) -> tuple[bool, bool, bool, bool]:
        return (self.process, self.plan, self.act, self.error)

    def get(self, category: str) -> bool:
        if category not in CATEGORIES:
            raise ValueError(f"unknown category {category!r}")
        return getattr(self, category)


@dataclass(frozen=True)
class KappaResult:
    """Binary Cohen's kappa for one category.

    ``kappa`` is None when the expected agreement is 1 (both coders constant
    and identical), in which case the statistic is undefined rather than
    being forced to 0 or 1.
    """

    category: str
    kappa: float | None
    n_items: int
    observed_agreement: float
    expected_agreement: float


@dataclass(frozen=True)
class MergeResult:
    """One merged SrlCodes per utterance plus the tally of uncoded ones."""

    codes: dict[str, SrlCodes]
    uncoded: tuple[str, ...]


def merge_codes(
    labels: Sequence[SrlCodes],
    utterance_ids: Iterable[str],
    policy: str = "single_coder",
    coder_priority: Sequence[str] | None = None,
) -> MergeResult:
    """Collapse per-coder labels to exactly one SrlCodes per utterance.

    ``policy`` is "single_coder" (expects one coder per utterance; duplicate
    labels with identical flags are tolerated, genuine disagreement raises)
    or "adjudicated" (the earliest coder in ``coder_priority`` wins).
    Utterances with no label record get all-false flags and are tallied
    in ``uncoded``. Repeated labels by the same coder keep the last one.
    """
    if policy not in ("single_coder", "adjudicated"):
        raise ValueError(f"unknown merge policy {policy!r}")
    if policy == "adjudicated" and not coder_priority:
        raise ValueError("adjudicated policy requires a coder_priority list")

    by_utterance: dict[str, dict[str, SrlCodes]] = {}
    for rec in labels:
        by_utterance.setdefault(rec.utterance_id, {})[rec.coder_id] = rec

    merged: dict[str, SrlCodes] = {}
    uncoded: list[str] = []
    for uid in utterance_ids:
        coders = by_utterance.get(uid)
        if not coders:
            uncoded.append(uid)
            merged[uid] = SrlCodes(utterance_id=uid, coder_id="")
            continue
        if len(coders) == 1:
            merged[uid] = next(iter(coders.values()))
        elif policy == "single_coder":
            flags = {rec.flags() for rec in coders.values()}
            if len(flags) > 1:
                raise ConflictingLabelsWithoutPriority(
                    f"utterance {uid!r} labeled by {sorted(coders)} with "
                    "differing flags under single_coder policy"
                )
            merged[uid] = min(coders.values(), key=lambda r: r.coder_id)
        else:
            assert coder_priority is not None
            winner = next((c for c in coder_priority if c in coders), None)
            if winner is None:
                raise ConflictingLabelsWithoutPriority(
                    f"utterance {uid!r} has no coder in the priority list"
                )
            merged[uid] = coders[winner]
    return MergeResult(codes=merged, uncoded=tuple(uncoded))


def cohen_kappa(
    labels_a: Sequence[SrlCodes],
    labels_b: Sequence[SrlCodes],
    category: str,
) -> KappaResult:
    """Binary Cohen's kappa between two coders on one category's flag.

    kappa = (p_o - p_e) / (1 - p_e) with p_e from the coders' marginal
    yes/no rates. Both coders must have labeled the identical utterance set.
    """
    if category not in CATEGORIES:
        raise ValueError(f"unknown category {category!r}")
    a_by_uid = {rec.utterance_id: rec for rec in labels_a}
    b_by_uid = {rec.utterance_id: rec for rec in labels_b}
    if set(a_by_uid) != set(b_by_uid):
        only_a = sorted(set(a_by_uid) - set(b_by_uid))[:3]
        only_b = sorted(set(b_by_uid) - set(a_by_uid))[:3]
        raise ItemSetMismatch(
            f"coders labeled different utterance sets (e.g. only A: {only_a}, "
            f"only B: {only_b})"
        )
    n = len(a_by_uid)
    if n < 1:
        raise ItemSetMismatch("need at least one common item")

    n_agree = 0
    a_yes = 0
    b_yes = 0
    for uid, rec_a in a_by_uid.items():
        fa = rec_a.get(category)
        fb = b_by_uid[uid].get(category)
        n_agree += fa == fb
        a_yes += fa
        b_yes += fb

    p_o = n_agree / n
    pa, pb = a_yes / n, b_yes / n
    p_e = pa * pb + (1.0 - pa) * (1.0 - pb)
    if p_e >= 1.0:
        # Both coders constant with the same value: kappa undefined.
        return KappaResult(category, None, n, p_o, p_e)
    kappa = (p_o - p_e) / (1.0 - p_e)
    return KappaResult(category, kappa, n, p_o, p_e)


def reliability_summary(labels: Sequence[SrlCodes]) -> dict:
    """Per-category kappa over the double-coded subset of a codes file.

    Picks the coder pair with the largest shared utterance set. Returns a
    dict with the pair, item count, and one KappaResult-shaped entry per
    category (kappa None when degenerate); empty categories dict plus a
    status message when no double-coded overlap exists.
    """
    by_coder: dict[str, dict[str, SrlCodes]] = {}
    for rec in labels:
        by_coder.setdefault(rec.coder_id, {})[rec.utterance_id] = rec

    best_pair: tuple[str, str] | None = None
    best_common: set[str] = set()
    coders = sorted(by_coder)
    for i, ca in enumerate(coders):
        for cb in coders[i + 1:]:
            common = set(by_coder[ca]) & set(by_coder[cb])
            if len(common) > len(best_common):
                best_common = common
                best_pair = (ca, cb)

    if best_pair is None or not best_common:
        return {
            "status": "insufficient overlap: no utterance coded by two coders",
            "coders": None,
            "n_items": 0,
            "categories": {},
        }

    ca, cb = best_pair
    labels_a = [by_coder[ca][uid] for uid in sorted(best_common)]
    labels_b = [by_coder[cb][uid] for uid in sorted(best_common)]
    categories = {}
    for cat in CATEGORIES:
        res = cohen_kappa(labels_a, labels_b, cat)
        categories[cat] = {
            "kappa": res.kappa,
            "n_items": res.n_items,
            "observed_agreement": res.observed_agreement,
            "expected_agreement": res.expected_agreement,
        }
    return {
        "status": "ok",
        "coders": [ca, cb],
        "n_items": len(best_common),
        "categories": categories,
    }


def parse_codes(path: str | Path) -> list[SrlCodes]:
    """Read a codes CSV (utterance_id,coder_id,process,plan,act,error)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CODES_HEADER:
            raise SrlTraceError(
                f"{path}: codes header must be {','.join(CODES_HEADER)}"
            )
        out = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 6:
                raise SrlTraceError(f"{path}:{lineno}: expected 6 fields")
            uid, coder, *flags = row
            if any(f not in ("0", "1") for f in flags):
                raise SrlTraceError(f"{path}:{lineno}: flags must be 0 or 1")
            out.append(SrlCodes(uid, coder, *(f == "1" for f in flags)))
    return out


def write_codes(path: str | Path, labels: Iterable[SrlCodes]) -> None:
    """Write a codes CSV in the canonical column order."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CODES_HEADER)
        for rec in labels:
            writer.writerow(
                [rec.utterance_id, rec.coder_id]
                + [str(int(f)) for f in rec.flags()]
            )

