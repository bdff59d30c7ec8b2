"""Command-line entry points for the pipeline and the annotation service.

Every pipeline option can come from a JSON config file, a flag, or both
(flags win). Exit code is 0 on success and 1 on any pipeline error, which is
printed with the stage it came from.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from srltrace import align, coding, cycles, glmm, ingest, pipeline, simgen, textmine
from srltrace.errors import SrlTraceError


def _add_input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--transactions", type=Path)
    p.add_argument("--segments", type=Path, help="segments JSON file or directory")
    p.add_argument("--anchors", type=Path)
    p.add_argument("--codes", type=Path)
    p.add_argument("--out-dir", type=Path)
    p.add_argument("--merge-policy", choices=["single_coder", "adjudicated"])
    p.add_argument("--coder-priority", nargs="*", metavar="CODER")
    p.add_argument("--evaluate-before-codes", action="store_true", default=None,
                   help="read loop state before applying the utterance's codes")
    p.add_argument("--standardize-all", action="store_true", default=None,
                   help="z-score every independent variable, binary flags included")
    p.add_argument("--quadrature-nodes", type=int)
    p.add_argument("--min-count", type=int, help="unigram occurrence floor")
    p.add_argument("--fdr-q", type=float, help="Benjamini-Hochberg FDR level")
    p.add_argument("--punctuation", choices=["separate", "delete"])


def _project_config(args: argparse.Namespace) -> pipeline.ProjectConfig:
    overrides = {}
    for key in ("transactions", "segments", "anchors", "codes", "out_dir",
                "merge_policy", "evaluate_before_codes", "standardize_all",
                "quadrature_nodes", "min_count", "fdr_q", "punctuation"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "coder_priority", None):
        overrides["coder_priority"] = tuple(args.coder_priority)
    if args.config:
        return pipeline.ProjectConfig.from_file(args.config, **overrides)
    missing = [k for k in ("transactions", "segments", "anchors", "codes", "out_dir")
               if k not in overrides]
    if missing:
        raise SrlTraceError(
            f"missing required inputs (flags or --config): {', '.join(missing)}"
        )
    return pipeline.ProjectConfig(**overrides)


def _cmd_ingest(args) -> int:
    config = _project_config(args)
    _, transactions, tallies = pipeline.build_utterances(config)
    print(json.dumps(tallies, indent=2, sort_keys=True))
    return 0


def _cmd_align(args) -> int:
    config = _project_config(args)
    utterances, _, tallies = pipeline.build_utterances(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    align.write_utterances(out / "utterances.csv", utterances)
    print(f"wrote {len(utterances)} utterances to {out / 'utterances.csv'} "
          f"(discarded {tallies['n_segments_discarded_after_last_action']} "
          "trailing segments)")
    return 0


def _cmd_features(args) -> int:
    config = _project_config(args)
    _, _, rows, tallies = pipeline.build_features(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cycles.write_features(out / "features.csv", rows)
    print(f"wrote {len(rows)} attempt rows to {out / 'features.csv'} "
          f"({tallies['n_uncoded_utterances']} uncoded utterances)")
    return 0


def _cmd_fit(args) -> int:
    config = _project_config(args)
    _, _, rows, _ = pipeline.build_features(config)
    frame = pipeline.features_frame(rows)
    spec = pipeline.model_specs(config.standardize_all)[args.model]
    model = glmm.fit(spec, frame, quadrature_nodes=config.quadrature_nodes)
    report = model.report()
    if spec.fixed_terms:
        report["r2"] = glmm.r2_nakagawa(model, frame)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_compare(args) -> int:
    config = _project_config(args)
    _, _, rows, _ = pipeline.build_features(config)
    frame = pipeline.features_frame(rows)
    specs = pipeline.model_specs(config.standardize_all)
    fitted = {
        name: glmm.fit(spec, frame, quadrature_nodes=config.quadrature_nodes)
        for name, spec in specs.items()
    }
    rows_out = []
    for small, big in (("null", "in_the_moment"), ("in_the_moment", "cycles")):
        res = glmm.lrt(fitted[small], fitted[big])
        rows_out.append({"comparison": f"{small}_vs_{big}", "chi2": res.chi2,
                         "df": res.df, "p": res.p})
    print(json.dumps(rows_out, indent=2, sort_keys=True))
    return 0


def _cmd_unigrams(args) -> int:
    config = _project_config(args)
    utterances, _, rows, _ = pipeline.build_features(config)
    mining = textmine.mine_unigrams(
        [u.text for u in utterances],
        [bool(r.outcome) for r in rows],
        min_count=config.min_count,
        q=config.fdr_q,
        punctuation=config.punctuation,
    )
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    textmine.write_unigrams(out / "unigrams.csv", mining)
    print(f"tested {mining.n_tested} unigrams "
          f"({sum(r.bh_rejected for r in mining.records)} BH-significant) "
          f"-> {out / 'unigrams.csv'}")
    return 0


def _cmd_kappa(args) -> int:
    labels = coding.parse_codes(args.codes)
    summary = coding.reliability_summary(labels)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _cmd_report(args) -> int:
    config = _project_config(args)
    result = pipeline.run_pipeline(config)
    print(f"report bundle written to {result['out_dir']}")
    for row in result["lrt"]:
        print(f"  {row['comparison']}: chi2({row['df']}) = {row['chi2']:.2f}, "
              f"p = {row['p']:.4f}")
    return 0


def _cmd_simulate(args) -> int:
    cfg_kwargs = {}
    if args.sim_config:
        with open(args.sim_config, encoding="utf-8") as fh:
            cfg_kwargs = json.load(fh)
    if args.students is not None:
        cfg_kwargs["n_students"] = args.students
    if args.attempts is not None:
        cfg_kwargs["attempts_per_student"] = args.attempts
    if args.sigma is not None:
        cfg_kwargs["sigma"] = args.sigma
    if args.seed is not None:
        cfg_kwargs["seed"] = args.seed
    bundle = simgen.simulate(simgen.SimConfig(**cfg_kwargs), args.out_dir)
    print(f"simulated bundle in {bundle.out_dir}")
    return 0


def _cmd_serve(args) -> int:
    from srltrace import service

    config = _project_config(args)
    state = service.build_state(config)
    host, _, port = args.bind.rpartition(":")
    server = service.serve_annotation(
        state, host or "127.0.0.1", int(port), token=args.token
    )
    print(f"annotation service on http://{host or '127.0.0.1'}:{port} "
          f"({len(state.utterances)} utterances); Ctrl-C to stop")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srltrace",
        description="Think-aloud SRL cycle analysis for tutoring-system logs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, needs_inputs in (
        ("ingest", _cmd_ingest, True),
        ("align", _cmd_align, True),
        ("features", _cmd_features, True),
        ("unigrams", _cmd_unigrams, True),
        ("report", _cmd_report, True),
    ):
        p = sub.add_parser(name)
        _add_input_flags(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("fit")
    _add_input_flags(p)
    p.add_argument("--model", choices=["null", "in_the_moment", "cycles"],
                   default="cycles")
    p.set_defaults(fn=_cmd_fit)

    p = sub.add_parser("compare")
    _add_input_flags(p)
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("kappa")
    p.add_argument("--codes", type=Path, required=True)
    p.set_defaults(fn=_cmd_kappa)

    p = sub.add_parser("simulate")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--sim-config", type=Path, help="JSON SimConfig overrides")
    p.add_argument("--students", type=int)
    p.add_argument("--attempts", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("serve")
    _add_input_flags(p)
    p.add_argument("--bind", default="127.0.0.1:8577")
    p.add_argument("--token", help="require this bearer token on every request")
    p.set_defaults(fn=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SrlTraceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
