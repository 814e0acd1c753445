"""Matplotlib figures written next to the delimited reports.

Uses the Agg backend so report runs work headless; every figure goes to a
file, nothing is ever shown interactively.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from pxtopics.assoc import AssociationBand, AssociationGrid
from pxtopics.metrics import AggregateReport, MetricsReport
from pxtopics.phi import PhiReport

_BAND_COLORS = {
    AssociationBand.NEGLIGIBLE_TO_SMALL: "#d64545",
    AssociationBand.SMALL_TO_MEDIUM: "#e08f2e",
    AssociationBand.MEDIUM_TO_LARGE: "#3f9e4d",
    AssociationBand.VERY_LARGE: "#2f6fb4",
}
_BLANK = "#ffffff"
_DEGENERATE = "#c9c9c9"


def _save(fig, path: str | Path) -> None:
    fig.savefig(Path(path), dpi=150, bbox_inches="tight")
    plt.close(fig)


def topic_distribution_bar(counts: dict[str, int], path: str | Path, title: str) -> None:
    names = list(counts)
    values = [counts[n] for n in names]
    fig, ax = plt.subplots(figsize=(9, 4.5))
    ax.bar(range(len(names)), values, color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=40, ha="right", fontsize=8)
    ax.set_ylabel("comments")
    ax.set_title(title)
    _save(fig, path)


def metrics_f1_bar(report: MetricsReport, path: str | Path) -> None:
    names = list(report.per_topic)
    values = [report.per_topic[n].f1 for n in names]
    fig, ax = plt.subplots(figsize=(9, 4.5))
    ax.bar(range(len(names)), values, color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=40, ha="right", fontsize=8)
    ax.set_ylim(0, 1)
    ax.set_ylabel("F1")
    ax.set_title("Per-topic F1")
    _save(fig, path)


def aggregate_f1_bar(aggregate: AggregateReport, path: str | Path) -> None:
    names = list(aggregate.per_topic)
    means = [aggregate.per_topic[n]["f1"].mean for n in names]
    stds = [aggregate.per_topic[n]["f1"].std for n in names]
    fig, ax = plt.subplots(figsize=(9, 4.5))
    ax.bar(range(len(names)), means, yerr=stds, capsize=3, color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=40, ha="right", fontsize=8)
    ax.set_ylim(0, 1)
    ax.set_ylabel("F1 (mean over runs)")
    ax.set_title(f"Per-topic F1, {aggregate.n_runs} runs")
    _save(fig, path)


def phi_category_bar(report: PhiReport, path: str | Path) -> None:
    names = list(report.category_counts)
    values = [report.category_counts[n] for n in names]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(range(len(names)), values, color="#a85454")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("spans redacted")
    ax.set_title("PHI detections by category")
    _save(fig, path)


def kappa_histogram(per_comment: dict[str, float], path: str | Path) -> None:
    values = list(per_comment.values())
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(values, bins=np.linspace(-1.0, 1.0, 21), color="#54a878", edgecolor="#333")
    ax.set_xlabel("per-comment kappa")
    ax.set_ylabel("comments")
    ax.set_title("Inter-annotator agreement")
    _save(fig, path)


def association_heatmap(grid: AssociationGrid, path: str | Path) -> None:
    """Color-coded grid mirroring the CSV: band color when significant,
    white when blank, gray when degenerate."""
    n_rows = len(grid.topics)
    n_cols = len(grid.variables)
    colors = np.empty((n_rows, n_cols), dtype=object)
    for i, topic in enumerate(grid.topics):
        for j, variable in enumerate(grid.variables):
            cell = grid.cell(topic, variable)
            if cell.status == "degenerate":
                colors[i, j] = _DEGENERATE
            elif cell.status == "significant" and cell.band is not None:
                colors[i, j] = _BAND_COLORS[cell.band]
            else:
                colors[i, j] = _BLANK

    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * n_cols, 1.0 + 0.45 * n_rows))
    for i in range(n_rows):
        for j in range(n_cols):
            ax.add_patch(
                plt.Rectangle((j, n_rows - 1 - i), 1, 1, facecolor=colors[i, j], edgecolor="#888")
            )
    ax.set_xlim(0, n_cols)
    ax.set_ylim(0, n_rows)
    ax.set_xticks([j + 0.5 for j in range(n_cols)])
    ax.set_xticklabels(grid.variables, rotation=40, ha="right", fontsize=8)
    ax.set_yticks([n_rows - 1 - i + 0.5 for i in range(n_rows)])
    ax.set_yticklabels(grid.topics, fontsize=8)
    ax.set_title(f"Topic/variable associations (alpha = {grid.alpha:g})")
    handles = [
        plt.Rectangle((0, 0), 1, 1, facecolor=color) for color in _BAND_COLORS.values()
    ]
    ax.legend(
        handles,
        [band.value for band in _BAND_COLORS],
        loc="upper left",
        bbox_to_anchor=(1.02, 1.0),
        fontsize=7,
        frameon=False,
    )
    _save(fig, path)
