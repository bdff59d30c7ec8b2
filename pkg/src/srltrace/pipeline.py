"""End-to-end pipeline: files in, report bundle out.

Runs ingestion, synchronization, windowing, code merging, feature
extraction, the three nested correctness models with likelihood-ratio
tests, per-code descriptives with Wilson intervals, and unigram mining.
Reports are a pure function of the input files and config: no clock, no
randomness, stable float formatting, so reruns are byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import pandas as pd

from srltrace import align, coding, cycles, glmm, ingest, stats, textmine
from srltrace.errors import SrlTraceError

MOMENT_TERMS = ("f_process", "f_plan", "f_act", "f_error")
CYCLE_TERMS = ("loop_state", "n_unclosed_since", "attempts_per_cycle")
NUMERIC_CYCLE_TERMS = ("n_unclosed_since", "attempts_per_cycle")


class StageError(SrlTraceError):
    """An upstream failure annotated with the pipeline stage it came from."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")


@dataclass(frozen=True)
class ProjectConfig:
    """Input paths, policies, and modeling options for one pipeline run."""

    transactions: Path
    segments: Path
    anchors: Path
    codes: Path
    out_dir: Path
    merge_policy: str = "single_coder"
    coder_priority: tuple[str, ...] = ()
    evaluate_before_codes: bool = False
    standardize_all: bool = False
    quadrature_nodes: int = 15
    min_count: int = 2
    fdr_q: float = 0.05
    punctuation: str = "separate"

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "ProjectConfig":
        """Load a JSON config; relative paths resolve against its directory."""
        path = Path(path)
        with path.open(encoding="utf-8") as fh:
            doc = json.load(fh)
        base = path.parent
        tm = doc.pop("textmine", {})
        merged = {
            **doc,
            "min_count": tm.get("min_count", 2),
            "fdr_q": tm.get("q", 0.05),
            "punctuation": tm.get("punctuation", "separate"),
            **overrides,
        }
        for key in ("transactions", "segments", "anchors", "codes", "out_dir"):
            if key not in merged:
                raise SrlTraceError(f"config {path}: missing {key!r}")
            merged[key] = (base / merged[key]).resolve() \
                if not Path(merged[key]).is_absolute() else Path(merged[key])
        if "coder_priority" in merged:
            merged["coder_priority"] = tuple(merged["coder_priority"])
        return cls(**merged)


def model_specs(standardize_all: bool = False) -> dict[str, glmm.ModelSpec]:
    """The three pre-registered nested model specs.

    Binary flags stay on the presence scale by default so odds ratios read
    as per-presence effects; the numeric cycle features are z-scored.
    ``standardize_all`` z-scores every independent variable instead.
    """
    moment_std = frozenset(MOMENT_TERMS) if standardize_all else frozenset()
    cycle_std = frozenset(
        MOMENT_TERMS + CYCLE_TERMS if standardize_all else NUMERIC_CYCLE_TERMS
    )
    return {
        "null": glmm.ModelSpec("outcome", ()),
        "in_the_moment": glmm.ModelSpec("outcome", MOMENT_TERMS, standardize=moment_std),
        "cycles": glmm.ModelSpec(
            "outcome", MOMENT_TERMS + CYCLE_TERMS, standardize=cycle_std
        ),
    }


def features_frame(rows: list[cycles.AttemptRow]) -> pd.DataFrame:
    """AttemptRow list to the modeling DataFrame (CSV column names)."""
    return pd.DataFrame(
        {
            "student_id": [r.student_id for r in rows],
            "session_id": [r.session_id for r in rows],
            "attempt_index": [r.attempt_index for r in rows],
            "outcome": [r.outcome for r in rows],
            "f_process": [int(r.f_process) for r in rows],
            "f_plan": [int(r.f_plan) for r in rows],
            "f_act": [int(r.f_act) for r in rows],
            "f_error": [int(r.f_error) for r in rows],
            "loop_state": [int(r.in_loop) for r in rows],
            "n_unclosed_since": [r.n_unclosed_since for r in rows],
            "attempts_per_cycle": [r.attempts_per_cycle for r in rows],
        }
    )


def _stage(name: str):
    class _Ctx:
        def __enter__(self):
            return None

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, StageError) \
                    and isinstance(exc, Exception):
                raise StageError(name, exc) from exc
            return False

    return _Ctx()


def build_utterances(config: ProjectConfig) -> tuple[
    list[align.CombinedUtterance], list[ingest.Transaction], dict,
]:
    """Ingest and align only; returns utterances, transactions, tallies."""
    with _stage("ingest"):
        transactions = ingest.parse_transactions(config.transactions)
        anchors = ingest.parse_anchors(config.anchors)
        segments_path = Path(config.segments)
        if segments_path.is_dir():
            segments_by_session = ingest.parse_segment_dir(segments_path)
        else:
            segs = ingest.parse_segments(segments_path)
            segments_by_session = {segs[0].session_id: segs} if segs else {}

    with _stage("align"):
        utterances: list[align.CombinedUtterance] = []
        total_segments = 0
        sessions_in_order: list[str] = []
        for t in transactions:
            if t.session_id not in sessions_in_order:
                sessions_in_order.append(t.session_id)
        for session_id in sessions_in_order:
            session_txns = [t for t in transactions if t.session_id == session_id]
            raw_segments = segments_by_session.get(session_id, [])
            total_segments += len(raw_segments)
            if raw_segments:
                if session_id not in anchors:
                    raise SrlTraceError(f"no sync anchor for session {session_id!r}")
                synced = align.synchronize(raw_segments, anchors[session_id])
            else:
                synced = []
            utterances.extend(align.combine_windows(synced, session_txns))

    tallies = {
        "n_transactions": len(transactions),
        "n_sessions": len(sessions_in_order),
        "n_segments": total_segments,
        "n_segments_combined": sum(u.segment_count for u in utterances),
        "n_segments_discarded_after_last_action":
            total_segments - sum(u.segment_count for u in utterances),
        "n_utterances": len(utterances),
    }
    return utterances, transactions, tallies


def build_features(config: ProjectConfig) -> tuple[
    list[align.CombinedUtterance], list[ingest.Transaction],
    list[cycles.AttemptRow], dict,
]:
    """Ingest + align + merge + extract; returns utterances, transactions,
    feature rows, and bookkeeping tallies."""
    utterances, transactions, tallies = build_utterances(config)

    with _stage("coding"):
        labels = coding.parse_codes(config.codes)
        merge = coding.merge_codes(
            labels,
            [u.utterance_id for u in utterances],
            policy=config.merge_policy,
            coder_priority=list(config.coder_priority) or None,
        )

    with _stage("cycles"):
        paired = cycles.pair_utterances_with_codes(
            [u.utterance_id for u in utterances], merge.codes
        )
        rows = cycles.extract_features(
            paired, transactions,
            evaluate_before_codes=config.evaluate_before_codes,
        )

    tallies = {**tallies, "n_uncoded_utterances": len(merge.uncoded)}
    return utterances, transactions, rows, tallies


def descriptives(rows: list[cycles.AttemptRow]) -> dict:
    """Per-code presence counts and correctness shares with Wilson CIs."""
    summary = cycles.describe(rows)
    flags = {
        "process": lambda r: r.f_process,
        "plan": lambda r: r.f_plan,
        "act": lambda r: r.f_act,
        "error": lambda r: r.f_error,
        "none": lambda r: not (r.f_process or r.f_plan or r.f_act or r.f_error),
    }
    correctness = {}
    for name, pred in flags.items():
        subset = [r for r in rows if pred(r)]
        n = len(subset)
        if n == 0:
            correctness[name] = None
            continue
        successes = sum(r.outcome for r in subset)
        low, high = stats.wilson_ci(successes, n)
        correctness[name] = {
            "n": n,
            "n_correct": successes,
            "rate": successes / n,
            "wilson_low": low,
            "wilson_high": high,
        }
    summary["correctness_by_code"] = correctness
    return summary


def run_pipeline(config: ProjectConfig) -> dict:
    """Run everything and write the report bundle under config.out_dir."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    utterances, transactions, rows, tallies = build_features(config)
    frame = features_frame(rows)

    with _stage("report"):
        align.write_utterances(out_dir / "utterances.csv", utterances)
        cycles.write_features(out_dir / "features.csv", rows)
        desc = descriptives(rows)
        _write_json(out_dir / "descriptives.json", {**tallies, **desc})

    with _stage("glmm"):
        specs = model_specs(config.standardize_all)
        fitted: dict[str, glmm.FittedModel] = {}
        reports: dict[str, dict] = {}
        for name, spec in specs.items():
            model = glmm.fit(spec, frame, quadrature_nodes=config.quadrature_nodes)
            fitted[name] = model
            report = model.report()
            if spec.fixed_terms:
                report["r2"] = glmm.r2_nakagawa(model, frame)
            if len(spec.fixed_terms) >= 2:
                vifs = glmm.vif(frame, list(spec.fixed_terms))
                report["vif"] = {t: vifs[t] for t in spec.fixed_terms}
                report["vif_warnings"] = sorted(
                    t for t, v in vifs.items() if v >= 2.0
                )
            reports[name] = report
            _write_json(out_dir / f"model_{name}.json", report)

        lrt_rows = [
            {"comparison": "null_vs_in_the_moment",
             **_lrt_dict(glmm.lrt(fitted["null"], fitted["in_the_moment"]))},
            {"comparison": "in_the_moment_vs_cycles",
             **_lrt_dict(glmm.lrt(fitted["in_the_moment"], fitted["cycles"]))},
        ]
        _write_json(out_dir / "lrt.json", lrt_rows)

    with _stage("textmine"):
        mining = textmine.mine_unigrams(
            [u.text for u in utterances],
            [bool(r.outcome) for r in rows],
            min_count=config.min_count,
            q=config.fdr_q,
            punctuation=config.punctuation,
        )
        textmine.write_unigrams(out_dir / "unigrams.csv", mining)

    with _stage("report"):
        markdown = render_markdown(tallies, desc, reports, lrt_rows, mining)
        (out_dir / "report.md").write_text(markdown, encoding="utf-8")

    return {
        "out_dir": str(out_dir),
        "tallies": tallies,
        "models": reports,
        "lrt": lrt_rows,
        "n_unigrams_tested": mining.n_tested,
    }


def _lrt_dict(res: glmm.LrtResult) -> dict:
    return {"chi2": res.chi2, "df": res.df, "p": res.p}


def _write_json(path: Path, payload) -> None:
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _fmt_p(p: float) -> str:
    return "<.001" if p < 0.001 else f"{p:.3f}"


def _fmt_num(x: float | None) -> str:
    return "inf" if x is None else f"{x:.2f}"


def render_markdown(
    tallies: dict,
    desc: dict,
    reports: dict[str, dict],
    lrt_rows: list[dict],
    mining: textmine.MiningResult,
) -> str:
    """Human-readable report with odds ratios to 2 decimals, p to 3."""
    lines: list[str] = ["# Pipeline report", ""]

    lines += ["## Data", ""]
    lines.append(f"- attempts: {desc['n_attempts']}")
    lines.append(f"- sessions: {tallies['n_sessions']}")
    lines.append(f"- combined utterances: {tallies['n_utterances']}"
                 f" (uncoded: {tallies['n_uncoded_utterances']})")
    lines.append(
        f"- segments: {tallies['n_segments']} "
        f"(discarded after last action: "
        f"{tallies['n_segments_discarded_after_last_action']})"
    )
    lines.append("")

    lines += ["## Code presence before attempts", ""]
    lines += ["| Code | Attempts | Percent | Correctness | 95% CI |",
              "|---|---|---|---|---|"]
    for name in ("process", "plan", "act", "error", "none"):
        c = desc["codes"][name]
        corr = desc["correctness_by_code"][name]
        if corr is None:
            lines.append(f"| {name} | {c['count']} | {c['percent']:.2f}% | - | - |")
        else:
            lines.append(
                f"| {name} | {c['count']} | {c['percent']:.2f}% | "
                f"{corr['rate']:.3f} | [{corr['wilson_low']:.3f}, "
                f"{corr['wilson_high']:.3f}] |"
            )
    lines.append("")

    for name in ("in_the_moment", "cycles"):
        report = reports[name]
        lines += [f"## Model: {name}", ""]
        lines += ["| Effect | OR | 95% CI | p |", "|---|---|---|---|"]
        for term in report["terms"]:
            lines.append(
                f"| {term['name']} | {_fmt_num(term['odds_ratio'])} | "
                f"[{_fmt_num(term['ci_low'])}, {_fmt_num(term['ci_high'])}] | "
                f"{_fmt_p(term['p'])} |"
            )
        lines.append("")
        lines.append(
            f"Random-intercept SD: {report['sigma']:.3f}; "
            f"log-likelihood: {report['loglik']:.3f}; "
            f"N = {report['n_obs']} attempts, {report['n_groups']} students."
        )
        if "r2" in report:
            r2 = report["r2"]
            lines.append(
                f"Variance explained: fixed effects {100 * r2['r2_marginal']:.1f}%, "
                f"student intercepts +{100 * r2['beyond_fixed']:.1f}%."
            )
        if report.get("vif_warnings"):
            lines.append(
                "VIF >= 2 warnings: " + ", ".join(report["vif_warnings"]) + "."
            )
        elif "vif" in report:
            lines.append("All VIFs below 2.")
        lines.append("")

    lines += ["## Model comparisons (likelihood-ratio tests)", ""]
    for row in lrt_rows:
        p_text = "p < .001" if row["p"] < 0.001 else f"p = {row['p']:.3f}"
        lines.append(
            f"- {row['comparison']}: chi2({row['df']}) = {row['chi2']:.2f}, {p_text}"
        )
    lines.append("")

    lines += ["## Most distinct unigrams", ""]
    correct = [r for r in mining.records if r.correct_indicative][:10]
    incorrect = [r for r in mining.records if not r.correct_indicative][:10]
    lines += [
        f"Tested unigram pairs: N = {mining.n_tested} "
        f"(min occurrences {mining.n_filtered_tokens} tokens filtered, "
        f"{mining.n_skipped_zero_margin} untestable).",
        "",
        "| Correct-indicative | Nc | Ni | chi2 | p | "
        "Incorrect-indicative | Nc | Ni | chi2 | p |",
        "|---|---|---|---|---|---|---|---|---|---|",
    ]
    for i in range(max(len(correct), len(incorrect))):
        left = correct[i] if i < len(correct) else None
        right = incorrect[i] if i < len(incorrect) else None
        cells = []
        for rec in (left, right):
            if rec is None:
                cells += ["", "", "", "", ""]
            else:
                cells += [rec.token, str(rec.n_correct), str(rec.n_incorrect),
                          f"{rec.chi2:.2f}", _fmt_p(rec.p_raw)]
        lines.append("| " + " | ".join(cells) + " |")
    n_rejected = sum(r.bh_rejected for r in mining.records)
    lines.append("")
    lines.append(
        f"Benjamini-Hochberg at FDR 0.05: {n_rejected} of {mining.n_tested} "
        "tokens significant."
    )
    lines.append("")
    return "\n".join(lines)
