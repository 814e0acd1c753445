"""Single entry point wiring the pipeline subcommands.

Every run validates the config up front, writes its outputs under one
directory, and records a manifest (config hash, seed, tool version,
timestamps) so any reported number can be traced to its inputs.

Exit codes: 0 success, 1 validation error, 2 partial failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from collections import Counter
from datetime import datetime, timezone
from pathlib import Path

from pxtopics import __version__, assoc, classify, metrics, phi, plots, reports
from pxtopics.config import PipelineConfig, validate_config
from pxtopics.corpus import (
    Comment,
    dump_comments,
    gold_labels,
    load_annotations,
    load_comments,
    load_survey_records,
    topic_names,
)
from pxtopics.errors import ConfigInvalid, PxError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2

logger = logging.getLogger("pxtopics")


def _wants(fmt: str | None, kind: str) -> bool:
    return fmt is None or fmt == kind


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_manifest(config: PipelineConfig, out_dir: Path, command: str, started: str) -> None:
    manifest = {
        "tool": "pxtopics",
        "version": __version__,
        "subcommand": command,
        "config_path": str(config.source_path),
        "config_sha256": config.sha256(),
        "seed": config.seed,
        "started_at": started,
        "finished_at": _utc_now(),
    }
    reports.write_json(manifest, out_dir / "manifest.json")


def _run_id(config: PipelineConfig) -> str:
    return f"{config.sha256()[:12]}-s{config.seed}"


def _cmd_redact(config: PipelineConfig, out_dir: Path, fmt: str | None) -> int:
    if config.comments_path is None:
        raise ConfigInvalid(["[corpus] comments: required for 'redact'"])
    comments = load_comments(config.comments_path, config.comments_format)
    phi_config = config.build_phi_config()
    redacted = [
        Comment(id=c.id, text=phi.redact(c.text, phi_config).redacted_text) for c in comments
    ]
    dump_comments(redacted, out_dir / f"redacted_comments.{config.comments_format}",
                  config.comments_format)
    report = phi.redaction_report(comments, phi_config)
    if _wants(fmt, "json"):
        reports.write_json(reports.phi_report_to_dict(report), out_dir / "phi_report.json")
    if _wants(fmt, "text"):
        reports.write_text(reports.render_phi_table(report), out_dir / "phi_report.txt")
    plots.phi_category_bar(report, out_dir / "phi_categories.png")
    logger.info(
        "redacted %d comments; %d contained PHI (fraction %.4f)",
        report.comments_scanned,
        report.comments_with_phi,
        report.phi_fraction,
    )
    return EXIT_OK


def _cmd_classify(config: PipelineConfig, out_dir: Path, fmt: str | None) -> int:
    if config.comments_path is None:
        raise ConfigInvalid(["[corpus] comments: required for 'classify'"])
    comments = load_comments(config.comments_path, config.comments_format)
    backend = config.build_backend_config()
    template = config.build_template()
    result = classify.classify_corpus(
        backend,
        template,
        comments,
        run_id=_run_id(config),
        phi_config=config.build_phi_config(),
    )
    reports.write_predictions(result, out_dir / "predictions.jsonl", out_dir / "raw_responses")
    counts = Counter()
    for output in result.outputs:
        for name in output.labels.to_names():
            counts[name] += 1
    plots.topic_distribution_bar(
        {name: counts.get(name, 0) for name in topic_names()},
        out_dir / "topic_distribution.png",
        "Predicted topic distribution",
    )
    logger.info("classified %d comments, %d failures", len(result.outputs), len(result.failures))
    if result.failures:
        reports.write_failures(result, out_dir / "failures.json")
        for failure in result.failures:
            logger.warning("comment %s failed: %s", failure.comment_id, failure.error)
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_evaluate(config: PipelineConfig, out_dir: Path, fmt: str | None) -> int:
    if config.gold_path is None:
        raise ConfigInvalid(["[corpus] gold: required for 'evaluate'"])
    if not config.eval_predictions:
        raise ConfigInvalid(["[eval] predictions: required for 'evaluate'"])
    missing = [str(p) for p in config.eval_predictions if not p.is_file()]
    if missing:
        raise ConfigInvalid([f"[eval] predictions: file not found: {m}" for m in missing])

    gold = gold_labels(load_annotations(config.gold_path, config.gold_format))
    run_reports = []
    for index, path in enumerate(config.eval_predictions, start=1):
        predictions = reports.read_predictions(path)
        ids = [cid for cid in gold if cid in predictions]
        skipped = len(gold) - len(ids)
        if skipped:
            logger.warning("%s: %d gold comments lack predictions", path.name, skipped)
        if not ids:
            raise ConfigInvalid([f"[eval] predictions: {path} shares no ids with the gold file"])
        report = metrics.overall_metrics([gold[c] for c in ids], [predictions[c] for c in ids])
        run_reports.append(report)
        suffix = "" if len(config.eval_predictions) == 1 else f"_run{index}"
        if _wants(fmt, "json"):
            reports.write_json(
                reports.metrics_to_dict(report), out_dir / f"metrics{suffix}.json"
            )
        if _wants(fmt, "text"):
            reports.write_text(
                reports.render_metrics_table(report), out_dir / f"metrics{suffix}.txt"
            )
        logger.info(
            "%s: example %.4f micro %.4f macro %.4f weighted %.4f over %d comments",
            path.name,
            report.example_based_f1,
            report.micro_f1,
            report.macro_f1,
            report.weighted_f1,
            report.n_comments,
        )

    if len(run_reports) >= 2:
        aggregate = metrics.aggregate_runs(run_reports)
        if _wants(fmt, "json"):
            reports.write_json(reports.aggregate_to_dict(aggregate), out_dir / "aggregate.json")
        if _wants(fmt, "text"):
            reports.write_text(reports.render_aggregate_table(aggregate), out_dir / "aggregate.txt")
        plots.aggregate_f1_bar(aggregate, out_dir / "metrics_f1.png")
    else:
        plots.metrics_f1_bar(run_reports[0], out_dir / "metrics_f1.png")
    return EXIT_OK


def _cmd_agreement(config: PipelineConfig, out_dir: Path, fmt: str | None) -> int:
    if config.annotations_path is None:
        raise ConfigInvalid(["[corpus] annotations: required for 'agreement'"])
    annotations = load_annotations(config.annotations_path, config.annotations_format)
    summary = metrics.kappa_summary(annotations)
    if _wants(fmt, "json"):
        reports.write_json(reports.kappa_to_dict(summary), out_dir / "kappa.json")
    if _wants(fmt, "text"):
        reports.write_text(reports.render_kappa_table(summary), out_dir / "kappa.txt")
    plots.kappa_histogram(dict(summary.per_comment), out_dir / "kappa_hist.png")
    logger.info(
        "mean kappa %.4f over %d comments; %d queued for review",
        summary.mean_kappa,
        len(summary.per_comment),
        len(summary.review_queue),
    )
    return EXIT_OK


def _cmd_associate(config: PipelineConfig, out_dir: Path, fmt: str | None) -> int:
    if config.survey_path is None:
        raise ConfigInvalid(["[corpus] survey: required for 'associate'"])
    if not config.eval_predictions:
        raise ConfigInvalid(["[eval] predictions: required for 'associate'"])
    if not config.assoc_variables:
        raise ConfigInvalid(["[assoc] variables: required for 'associate'"])
    predictions_path = config.eval_predictions[0]
    if not predictions_path.is_file():
        raise ConfigInvalid([f"[eval] predictions: file not found: {predictions_path}"])

    predictions = reports.read_predictions(predictions_path)
    records = load_survey_records(config.survey_path, config.survey_format, config.survey_schema)

    grid = assoc.association_matrix(predictions, records, config.assoc_variables, config.alpha)
    if _wants(fmt, "csv"):
        reports.grid_to_csv(grid, out_dir / "association_grid.csv")
        reports.grid_to_html(grid, out_dir / "association_grid.html")
    if _wants(fmt, "json"):
        reports.write_json(reports.grid_to_dict(grid), out_dir / "association_grid.json")
    plots.association_heatmap(grid, out_dir / "association_heatmap.png")

    analysis = assoc.rating_analysis(
        predictions, records, config.rating_name, config.rating_range
    )
    if _wants(fmt, "csv"):
        reports.rating_analysis_to_csv(analysis, out_dir / "rating_analysis.csv")
    if _wants(fmt, "text"):
        reports.write_text(reports.render_rating_analysis(analysis), out_dir / "rating_analysis.txt")

    degenerate = sum(1 for cell in grid.cells if cell.status == "degenerate")
    logger.info(
        "grid: %d cells (%d degenerate); rating model %s",
        len(grid.cells),
        degenerate,
        "fit" if analysis.model is not None else "NOT fit",
    )
    if analysis.model is None:
        return EXIT_PARTIAL
    return EXIT_OK


_COMMANDS = {
    "redact": _cmd_redact,
    "classify": _cmd_classify,
    "evaluate": _cmd_evaluate,
    "agreement": _cmd_agreement,
    "associate": _cmd_associate,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pxtopics",
        description="De-identify, classify, evaluate, and analyze patient feedback comments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("redact", "redact PHI from the comment corpus and report detections"),
        ("classify", "classify redacted comments into the ten canonical topics"),
        ("evaluate", "score predictions against gold annotations"),
        ("agreement", "compute inter-annotator agreement"),
        ("associate", "associate predicted topics with survey variables"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="pipeline config file")
        cmd.add_argument("--out", help="output directory (overrides [output] dir)")
        cmd.add_argument("--seed", type=int, help="seed override")
        cmd.add_argument(
            "--format",
            choices=["json", "csv", "text"],
            help="restrict report files to one format (default: write all)",
        )
        cmd.add_argument("--k", type=int, help="override k_shots")
        cmd.add_argument("--backend", choices=["remote", "rules"], help="override backend")
    return parser


def run(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = validate_config(args.config)
    except ConfigInvalid as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG

    overrides = {}
    if args.out is not None:
        overrides["output_dir"] = Path(args.out)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.k is not None:
        if args.k < 0:
            print("--k must be >= 0", file=sys.stderr)
            return EXIT_CONFIG
        overrides["k_shots"] = args.k
    if args.backend is not None:
        overrides["backend"] = args.backend
    if overrides:
        config = dataclasses.replace(config, **overrides)

    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    log_handler = logging.FileHandler(out_dir / "run.log", encoding="utf-8")
    log_handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    root = logging.getLogger("pxtopics")
    root.setLevel(logging.INFO)
    root.addHandler(log_handler)
    started = _utc_now()
    try:
        code = _COMMANDS[args.command](config, out_dir, args.format)
    except ConfigInvalid as exc:
        print(str(exc), file=sys.stderr)
        logger.error("%s", exc)
        code = EXIT_CONFIG
    except PxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        logger.error("%s", exc)
        code = EXIT_CONFIG
    finally:
        _write_manifest(config, out_dir, args.command, started)
        root.removeHandler(log_handler)
        log_handler.close()
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
