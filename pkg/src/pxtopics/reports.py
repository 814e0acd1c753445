"""Report serialization: JSON, delimited files, and aligned text tables.

All writers emit byte-stable output for identical inputs: keys are written
in a fixed order, floats are formatted explicitly, and line endings are
always "\n". Metric tables follow the familiar topic-rows / metric-columns
layout with "xx.xx% +/- 0.0xx" cells for aggregated runs.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from pxtopics.assoc import AssociationBand, AssociationGrid, RatingAnalysis
from pxtopics.classify import ClassificationOutput, CorpusRunResult
from pxtopics.corpus import LabelVector
from pxtopics.metrics import AggregateReport, KappaSummary, MetricsReport
from pxtopics.phi import PhiReport

PLUS_MINUS = "±"


def write_json(payload, path: str | Path) -> None:
    text = json.dumps(payload, indent=2, ensure_ascii=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def write_text(text: str, path: str | Path) -> None:
    if not text.endswith("\n"):
        text += "\n"
    Path(path).write_text(text, encoding="utf-8")


def format_percent(value: float) -> str:
    return f"{value * 100:.2f}%"


def format_mean_std(mean: float, std: float) -> str:
    return f"{format_percent(mean)} {PLUS_MINUS} {std:.3f}"


def _table(rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for index, row in enumerate(rows):
        cells = [cell.ljust(width) for cell, width in zip(row, widths)]
        lines.append("  ".join(cells).rstrip())
        if index == 0:
            lines.append("  ".join("-" * width for width in widths))
    return "\n".join(lines)


# --- metrics ---

def metrics_to_dict(report: MetricsReport) -> dict:
    return {
        "n_comments": report.n_comments,
        "overall": {name: report.overall()[name] for name in report.overall()},
        "per_topic": {
            name: {
                "f1": tm.f1,
                "auc": tm.auc,
                "tp": tm.counts.tp,
                "fp": tm.counts.fp,
                "fn": tm.counts.fn,
                "tn": tm.counts.tn,
                "f1_undefined": tm.f1_undefined,
                "auc_undefined": tm.auc_undefined,
            }
            for name, tm in report.per_topic.items()
        },
    }


def render_metrics_table(report: MetricsReport) -> str:
    rows: list[list[str]] = [["Topic", "F1", "AUC"]]
    for name, tm in report.per_topic.items():
        rows.append([name, format_percent(tm.f1), format_percent(tm.auc)])
    overall_rows: list[list[str]] = [["Metric", "Value"]]
    for name, value in report.overall().items():
        overall_rows.append([name, format_percent(value)])
    return (
        _table(rows)
        + "\n\n"
        + _table(overall_rows)
        + f"\n\ncomments evaluated: {report.n_comments}"
    )


def aggregate_to_dict(aggregate: AggregateReport) -> dict:
    return {
        "n_runs": aggregate.n_runs,
        "overall": {
            name: {"mean": ms.mean, "std": ms.std} for name, ms in aggregate.overall.items()
        },
        "per_topic": {
            name: {
                metric: {"mean": ms.mean, "std": ms.std} for metric, ms in metrics.items()
            }
            for name, metrics in aggregate.per_topic.items()
        },
    }


def render_aggregate_table(aggregate: AggregateReport) -> str:
    rows: list[list[str]] = [["Topic", "F1", "AUC"]]
    for name, metrics in aggregate.per_topic.items():
        rows.append(
            [
                name,
                format_mean_std(metrics["f1"].mean, metrics["f1"].std),
                format_mean_std(metrics["auc"].mean, metrics["auc"].std),
            ]
        )
    overall_rows: list[list[str]] = [["Metric", f"Mean {PLUS_MINUS} Std"]]
    for name, ms in aggregate.overall.items():
        overall_rows.append([name, format_mean_std(ms.mean, ms.std)])
    return (
        _table(rows)
        + "\n\n"
        + _table(overall_rows)
        + f"\n\nruns aggregated: {aggregate.n_runs}"
    )


# --- agreement ---

def kappa_to_dict(summary: KappaSummary) -> dict:
    return {
        "mean_kappa": summary.mean_kappa,
        "n_comments": len(summary.per_comment),
        "review_queue": list(summary.review_queue),
        "degenerate_comments": list(summary.degenerate_comments),
        "per_comment": dict(summary.per_comment),
    }


def render_kappa_table(summary: KappaSummary) -> str:
    rows: list[list[str]] = [["Comment", "Kappa"]]
    for comment_id, value in summary.per_comment.items():
        rows.append([comment_id, f"{value:.4f}"])
    footer = (
        f"\n\nmean kappa: {summary.mean_kappa:.4f}"
        f"\nreview queue ({len(summary.review_queue)}): "
        + (", ".join(summary.review_queue) if summary.review_queue else "(empty)")
    )
    return _table(rows) + footer


# --- PHI ---

def phi_report_to_dict(report: PhiReport) -> dict:
    return {
        "comments_scanned": report.comments_scanned,
        "comments_with_phi": report.comments_with_phi,
        "phi_fraction": report.phi_fraction,
        "category_counts": report.category_counts,
        "sample_size": report.sample_size,
        "seed": report.seed,
        "sample": list(report.sample),
    }


def render_phi_table(report: PhiReport) -> str:
    rows: list[list[str]] = [["Category", "Count"]]
    for category, count in report.category_counts.items():
        rows.append([category, str(count)])
    lines = [
        _table(rows),
        "",
        f"comments scanned: {report.comments_scanned}",
        f"comments with PHI: {report.comments_with_phi}",
        f"PHI fraction: {report.phi_fraction:.4f}",
        "",
        f"reviewer sample (size {report.sample_size}, seed {report.seed}):",
    ]
    for entry in report.sample:
        lines.append(f"  [{entry['comment_id']}]")
        lines.append(f"    original: {entry['original']}")
        lines.append(f"    redacted: {entry['redacted']}")
    return "\n".join(lines)


# --- predictions ---

def write_predictions(
    result: CorpusRunResult, path: str | Path, raw_dir: str | Path | None = None
) -> None:
    """Predictions as JSONL: comment id, topic names, raw-response path."""
    path = Path(path)
    raw_relative: dict[str, str] = {}
    if raw_dir is not None:
        raw_dir = Path(raw_dir)
        raw_dir.mkdir(parents=True, exist_ok=True)
        for output in result.outputs:
            raw_path = raw_dir / f"{output.comment_id}.txt"
            raw_path.write_text(output.raw_response + "\n", encoding="utf-8")
            raw_relative[output.comment_id] = str(raw_path.relative_to(path.parent))
    with path.open("w", encoding="utf-8") as fh:
        for output in result.outputs:
            row = {
                "comment_id": output.comment_id,
                "labels": output.labels.to_names(),
                "raw_response_path": raw_relative.get(output.comment_id),
                "run_id": output.run_id,
                "attempts": output.attempts,
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_predictions(path: str | Path) -> dict[str, LabelVector]:
    predictions: dict[str, LabelVector] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        predictions[row["comment_id"]] = LabelVector.from_names(row["labels"])
    return predictions


def write_failures(result: CorpusRunResult, path: str | Path) -> None:
    payload = [
        {"comment_id": failure.comment_id, "error": failure.error}
        for failure in result.failures
    ]
    write_json(payload, path)


# --- association grid & rating analysis ---

_BAND_COLORS = {
    AssociationBand.NEGLIGIBLE_TO_SMALL: "#d64545",
    AssociationBand.SMALL_TO_MEDIUM: "#e08f2e",
    AssociationBand.MEDIUM_TO_LARGE: "#3f9e4d",
    AssociationBand.VERY_LARGE: "#2f6fb4",
}


def grid_to_csv(grid: AssociationGrid, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["Topic", *grid.variables])
        for topic in grid.topics:
            writer.writerow([topic, *(grid.cell(topic, v).display() for v in grid.variables)])


def grid_to_html(grid: AssociationGrid, path: str | Path) -> None:
    rows = ["<table border='1' cellspacing='0' cellpadding='4'>"]
    header = "".join(f"<th>{v}</th>" for v in grid.variables)
    rows.append(f"<tr><th>Topic</th>{header}</tr>")
    for topic in grid.topics:
        cells = []
        for variable in grid.variables:
            cell = grid.cell(topic, variable)
            if cell.status == "significant" and cell.band is not None:
                color = _BAND_COLORS[cell.band]
                cells.append(f"<td style='background:{color};color:white'>{cell.band.value}</td>")
            elif cell.status == "degenerate":
                cells.append("<td style='background:#cccccc'>n/a</td>")
            else:
                cells.append("<td></td>")
        rows.append(f"<tr><td>{topic}</td>{''.join(cells)}</tr>")
    rows.append("</table>")
    legend = "".join(
        f"<span style='background:{color};color:white;padding:2px 6px;margin-right:6px'>"
        f"{band.value}</span>"
        for band, color in _BAND_COLORS.items()
    )
    rows.append(f"<p>significance level: {grid.alpha:g}; blank = not significant</p>")
    rows.append(f"<p>{legend}</p>")
    write_text("\n".join(rows), path)


def grid_to_dict(grid: AssociationGrid) -> dict:
    return {
        "alpha": grid.alpha,
        "topics": list(grid.topics),
        "variables": list(grid.variables),
        "cells": [
            {
                "topic": cell.topic,
                "variable": cell.variable,
                "status": cell.status,
                "p_value": cell.p_value,
                "v": cell.v,
                "band": cell.band.value if cell.band else None,
                "low_expected": cell.low_expected,
            }
            for cell in grid.cells
        ],
    }


def _effect_cell(value: float | None, fmt: str) -> str:
    return "n/a" if value is None else format(value, fmt)


def rating_analysis_to_csv(analysis: RatingAnalysis, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["Topic", "Coefficient", "p-value", "Correlation", "p-value"])
        for effect in analysis.effects:
            writer.writerow(
                [
                    effect.topic,
                    _effect_cell(effect.coefficient, ".4f"),
                    _effect_cell(effect.coefficient_p, ".3f"),
                    _effect_cell(effect.correlation, ".3f"),
                    _effect_cell(effect.correlation_p, ".3f"),
                ]
            )


def render_rating_analysis(analysis: RatingAnalysis) -> str:
    rows: list[list[str]] = [["Topic", "Coefficient", "p-value", "Correlation", "p-value"]]
    for effect in analysis.effects:
        rows.append(
            [
                effect.topic,
                _effect_cell(effect.coefficient, ".4f"),
                _effect_cell(effect.coefficient_p, ".3f"),
                _effect_cell(effect.correlation, ".3f"),
                _effect_cell(effect.correlation_p, ".3f"),
            ]
        )
    footer = [
        "",
        f"dependent variable: {analysis.rating_name} (n = {analysis.n})",
        f"top-box rate: {analysis.top_box_rate:.4f}",
    ]
    if analysis.model is not None:
        footer.append(
            "model: converged in "
            f"{analysis.model.iterations} iterations"
            if analysis.model.converged
            else "model: did NOT converge"
        )
    return _table(rows) + "\n".join(footer)
