"""Multi-label classification metrics and inter-annotator agreement.

Per-topic F1 uses the 2tp/(2tp+fp+fn) form, defined as 0 (and flagged)
when the denominator is 0. AUC for hard 0/1 predictions reduces to
balanced accuracy (TPR+TNR)/2; a side with zero support is undefined and
reported as 0.5 with a flag. Aggregation over repeated runs reports the
arithmetic mean and the sample (n-1) standard deviation.

The metric functions accept any uniform-length bit vectors; the canonical
ten-topic LabelVector is the usual input and keys results by topic name.
"""

from __future__ import annotations

import statistics
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Sequence

from pxtopics.corpus import TOPIC_COUNT, AnnotationSet, LabelVector, topic_names
from pxtopics.errors import (
    AnnotatorCountMismatch,
    EmptyInput,
    LengthMismatch,
    TooFewRuns,
)

OVERALL_METRICS = ("example_based_f1", "micro_f1", "macro_f1", "weighted_f1")

BitVector = Sequence[bool]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class TopicMetrics:
    f1: float
    auc: float
    counts: ConfusionCounts
    f1_undefined: bool = False
    auc_undefined: bool = False


@dataclass(frozen=True)
class MetricsReport:
    per_topic: "OrderedDict[str, TopicMetrics]"
    micro_f1: float
    macro_f1: float
    weighted_f1: float
    example_based_f1: float
    n_comments: int

    def overall(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in OVERALL_METRICS}


@dataclass(frozen=True)
class MeanStd:
    mean: float
    std: float


@dataclass(frozen=True)
class AggregateReport:
    n_runs: int
    overall: "OrderedDict[str, MeanStd]"
    per_topic: "OrderedDict[str, dict[str, MeanStd]]"


def _as_bit_rows(
    y_true: Sequence[BitVector], y_pred: Sequence[BitVector]
) -> tuple[list[tuple[bool, ...]], list[tuple[bool, ...]], int]:
    if len(y_true) != len(y_pred):
        raise LengthMismatch(f"{len(y_true)} true vs {len(y_pred)} predicted")
    if not y_true:
        raise EmptyInput("no comments to evaluate")
    true_rows = [tuple(bool(b) for b in v) for v in y_true]
    pred_rows = [tuple(bool(b) for b in v) for v in y_pred]
    width = len(true_rows[0])
    if any(len(r) != width for r in true_rows + pred_rows):
        raise LengthMismatch("vectors have differing label counts")
    return true_rows, pred_rows, width


def _label_names(width: int) -> list[str]:
    if width == TOPIC_COUNT:
        return topic_names()
    return [f"label_{i}" for i in range(width)]


def _f1_from_counts(tp: int, fp: int, fn: int) -> tuple[float, bool]:
    denominator = 2 * tp + fp + fn
    if denominator == 0:
        return 0.0, True
    return 2 * tp / denominator, False


def _topic_metrics(counts: ConfusionCounts) -> TopicMetrics:
    f1, f1_undefined = _f1_from_counts(counts.tp, counts.fp, counts.fn)
    positives = counts.tp + counts.fn
    negatives = counts.tn + counts.fp
    if positives == 0 or negatives == 0:
        auc, auc_undefined = 0.5, True
    else:
        auc = (counts.tp / positives + counts.tn / negatives) / 2
        auc_undefined = False
    return TopicMetrics(
        f1=f1, auc=auc, counts=counts, f1_undefined=f1_undefined, auc_undefined=auc_undefined
    )


def per_topic_metrics(
    y_true: Sequence[BitVector], y_pred: Sequence[BitVector]
) -> "OrderedDict[str, TopicMetrics]":
    """F1 and AUC per topic, counted over the i-th bit of every vector pair."""
    true_rows, pred_rows, width = _as_bit_rows(y_true, y_pred)
    names = _label_names(width)
    out: "OrderedDict[str, TopicMetrics]" = OrderedDict()
    for i in range(width):
        tp = fp = fn = tn = 0
        for t, p in zip(true_rows, pred_rows):
            if t[i] and p[i]:
                tp += 1
            elif not t[i] and p[i]:
                fp += 1
            elif t[i] and not p[i]:
                fn += 1
            else:
                tn += 1
        out[names[i]] = _topic_metrics(ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn))
    return out


def overall_metrics(y_true: Sequence[BitVector], y_pred: Sequence[BitVector]) -> MetricsReport:
    """Micro, macro, weighted, and example-based F1 over a corpus.

    Weighted-F1 weights each topic by its true-label support; when no topic
    has support the weighted value is defined as 0. Example-based F1 scores
    2|T&P|/(|T|+|P|) per comment, with the empty/empty case worth 1.
    """
    true_rows, pred_rows, _ = _as_bit_rows(y_true, y_pred)
    per_topic = per_topic_metrics(y_true, y_pred)

    tp = sum(m.counts.tp for m in per_topic.values())
    fp = sum(m.counts.fp for m in per_topic.values())
    fn = sum(m.counts.fn for m in per_topic.values())
    micro_f1, _unused = _f1_from_counts(tp, fp, fn)

    macro_f1 = sum(m.f1 for m in per_topic.values()) / len(per_topic)

    supports = {name: m.counts.tp + m.counts.fn for name, m in per_topic.items()}
    total_support = sum(supports.values())
    if total_support == 0:
        weighted_f1 = 0.0
    else:
        weighted_f1 = (
            sum(supports[name] * m.f1 for name, m in per_topic.items()) / total_support
        )

    example_scores = []
    for t, p in zip(true_rows, pred_rows):
        n_true, n_pred = sum(t), sum(p)
        if n_true == 0 and n_pred == 0:
            example_scores.append(1.0)
        else:
            both = sum(1 for x, y in zip(t, p) if x and y)
            example_scores.append(2 * both / (n_true + n_pred))
    example_based_f1 = sum(example_scores) / len(example_scores)

    return MetricsReport(
        per_topic=per_topic,
        micro_f1=micro_f1,
        macro_f1=macro_f1,
        weighted_f1=weighted_f1,
        example_based_f1=example_based_f1,
        n_comments=len(true_rows),
    )


def aggregate_runs(reports: Sequence[MetricsReport]) -> AggregateReport:
    """Mean and sample standard deviation per metric over repeated runs."""
    if len(reports) < 2:
        raise TooFewRuns(f"need at least 2 runs, got {len(reports)}")

    def mean_std(values: Iterable[float]) -> MeanStd:
        values = list(values)
        return MeanStd(mean=statistics.fmean(values), std=statistics.stdev(values))

    overall: "OrderedDict[str, MeanStd]" = OrderedDict(
        (name, mean_std(getattr(r, name) for r in reports)) for name in OVERALL_METRICS
    )
    per_topic: "OrderedDict[str, dict[str, MeanStd]]" = OrderedDict()
    for name in reports[0].per_topic:
        per_topic[name] = {
            "f1": mean_std(r.per_topic[name].f1 for r in reports),
            "auc": mean_std(r.per_topic[name].auc for r in reports),
        }
    return AggregateReport(n_runs=len(reports), overall=overall, per_topic=per_topic)


def cohen_kappa_comment(a: BitVector, b: BitVector) -> float:
    """Cohen's kappa over one comment's labels, two raters, categories {0,1}.

    The ten labels act as ten rated items and marginals are per-comment.
    When expected agreement is exactly 1 the statistic is degenerate; by
    convention it is 1 for perfect observed agreement and 0 otherwise.
    """
    a_bits = [bool(x) for x in a]
    b_bits = [bool(x) for x in b]
    if len(a_bits) != len(b_bits):
        raise LengthMismatch("annotation vectors differ in length")
    n = len(a_bits)
    p_o = sum(1 for x, y in zip(a_bits, b_bits) if x == y) / n
    p_a1 = sum(a_bits) / n
    p_b1 = sum(b_bits) / n
    p_e = p_a1 * p_b1 + (1 - p_a1) * (1 - p_b1)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1 - p_e)


def kappa_is_degenerate(a: BitVector, b: BitVector) -> bool:
    a_bits = [bool(x) for x in a]
    b_bits = [bool(x) for x in b]
    n = len(a_bits)
    p_a1 = sum(a_bits) / n
    p_b1 = sum(b_bits) / n
    return p_a1 * p_b1 + (1 - p_a1) * (1 - p_b1) == 1.0


@dataclass(frozen=True)
class KappaSummary:
    per_comment: "OrderedDict[str, float]"
    mean_kappa: float
    review_queue: tuple[str, ...]
    degenerate_comments: tuple[str, ...]


def kappa_summary(annotations: Iterable[AnnotationSet]) -> KappaSummary:
    """Per-comment kappa over double-annotated comments plus the review queue
    of every comment whose annotators did not agree perfectly (kappa < 1)."""
    by_comment: "OrderedDict[str, list[AnnotationSet]]" = OrderedDict()
    for ann in annotations:
        by_comment.setdefault(ann.comment_id, []).append(ann)

    if not by_comment:
        raise EmptyInput("no annotations supplied")
    per_comment: "OrderedDict[str, float]" = OrderedDict()
    degenerate: list[str] = []
    for comment_id, pair in by_comment.items():
        if len(pair) != 2:
            raise AnnotatorCountMismatch(
                f"comment {comment_id!r} has {len(pair)} annotators, expected 2"
            )
        per_comment[comment_id] = cohen_kappa_comment(pair[0].labels, pair[1].labels)
        if kappa_is_degenerate(pair[0].labels, pair[1].labels):
            degenerate.append(comment_id)

    mean_kappa = sum(per_comment.values()) / len(per_comment)
    review_queue = tuple(cid for cid, k in per_comment.items() if k < 1.0)
    return KappaSummary(
        per_comment=per_comment,
        mean_kappa=mean_kappa,
        review_queue=review_queue,
        degenerate_comments=tuple(degenerate),
    )
