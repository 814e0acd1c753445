"""Independent brute-force oracles the tests check the library against.

Everything here works on plain Python sets/lists and is written from the
metric definitions directly, on purpose sharing no code with the package.
"""

from __future__ import annotations

import math

import numpy as np


def set_f1(true_set: set, pred_set: set) -> float:
    if not true_set and not pred_set:
        return 1.0
    return 2 * len(true_set & pred_set) / (len(true_set) + len(pred_set))


def label_counts(true_sets, pred_sets, label):
    tp = sum(1 for T, P in zip(true_sets, pred_sets) if label in T and label in P)
    fp = sum(1 for T, P in zip(true_sets, pred_sets) if label not in T and label in P)
    fn = sum(1 for T, P in zip(true_sets, pred_sets) if label in T and label not in P)
    tn = sum(1 for T, P in zip(true_sets, pred_sets) if label not in T and label not in P)
    return tp, fp, fn, tn


def label_f1(tp, fp, fn):
    return 0.0 if (2 * tp + fp + fn) == 0 else 2 * tp / (2 * tp + fp + fn)


def label_auc(tp, fp, fn, tn):
    if (tp + fn) == 0 or (tn + fp) == 0:
        return 0.5
    return (tp / (tp + fn) + tn / (tn + fp)) / 2


def all_metrics(true_sets, pred_sets, n_labels):
    """Set-arithmetic metric bundle matching the documented conventions."""
    per_f1, per_auc, supports = [], [], []
    tp_sum = fp_sum = fn_sum = 0
    for label in range(n_labels):
        tp, fp, fn, tn = label_counts(true_sets, pred_sets, label)
        per_f1.append(label_f1(tp, fp, fn))
        per_auc.append(label_auc(tp, fp, fn, tn))
        supports.append(tp + fn)
        tp_sum, fp_sum, fn_sum = tp_sum + tp, fp_sum + fp, fn_sum + fn
    micro = label_f1(tp_sum, fp_sum, fn_sum)
    macro = sum(per_f1) / n_labels
    total_support = sum(supports)
    weighted = (
        0.0
        if total_support == 0
        else sum(s * f for s, f in zip(supports, per_f1)) / total_support
    )
    example = sum(set_f1(T, P) for T, P in zip(true_sets, pred_sets)) / len(true_sets)
    return {
        "per_topic_f1": per_f1,
        "per_topic_auc": per_auc,
        "micro_f1": micro,
        "macro_f1": macro,
        "weighted_f1": weighted,
        "example_based_f1": example,
    }


def chi2_p_value_by_integration(statistic: float, dof: int) -> float:
    """Upper-tail chi-square probability via trapezoid integration of the
    density, fine near the lower limit where the integrand bends hardest."""
    if statistic <= 0:
        return 1.0
    log_norm = -(dof / 2) * math.log(2) - math.lgamma(dof / 2)

    def density(x):
        return np.exp(log_norm + (dof / 2 - 1) * np.log(x) - x / 2)

    near = np.linspace(statistic, statistic + 2.0, 400_001)
    far = np.linspace(statistic + 2.0, statistic + 300.0, 400_001)
    return float(np.trapezoid(density(near), near) + np.trapezoid(density(far), far))


def pearson_r(x, y) -> float:
    """Textbook Pearson correlation with no shortcuts."""
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    return cov / math.sqrt(vx * vy)
