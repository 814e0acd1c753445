"""Association statistics between predicted topics and survey variables.

Chi-square independence tests with Cramer's V strength bands, point-biserial
correlation against numeric ratings, a proportional-odds cumulative-logit
model, and the Top-Box rating conversion. All p-values come from the
in-repo special functions.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from pxtopics.corpus import MISSING, LabelVector, SurveyRecord, topic_names
from pxtopics.errors import (
    ConstantInput,
    DegenerateTable,
    OutOfRange,
    SeparationDetected,
    SingleGroup,
)
from pxtopics.special import (
    chi_square_sf,
    normal_sf_two_sided,
    student_t_sf_two_sided,
)

LOW_EXPECTED_THRESHOLD = 5.0
SEPARATION_MAGNITUDE = 30.0


class AssociationBand(Enum):
    NEGLIGIBLE_TO_SMALL = "Negligible to Small"
    SMALL_TO_MEDIUM = "Small to Medium"
    MEDIUM_TO_LARGE = "Medium to Large"
    VERY_LARGE = "Very Large"


@dataclass(frozen=True)
class ContingencyTable:
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]
    n: int

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.row_labels), len(self.col_labels)


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    p_value: float
    min_expected: float

    @property
    def low_expected(self) -> bool:
        return self.min_expected < LOW_EXPECTED_THRESHOLD


@dataclass(frozen=True)
class CramersVResult:
    v: float
    dof_star: int
    band: AssociationBand


@dataclass(frozen=True)
class PointBiserialResult:
    r: float
    t_stat: float
    p_value: float
    n: int


def _category_sort_key(value) -> tuple:
    text = str(value)
    try:
        return (0, int(text), "")
    except ValueError:
        return (1, 0, text)


def build_contingency(
    topic_bits: Sequence[int], categories: Sequence[object]
) -> ContingencyTable:
    """Cross-tabulate topic absence/presence against observed categories.

    Entries whose category is the MISSING marker (or None) are deleted
    pairwise; all-zero rows and columns are pruned afterwards.
    """
    if len(topic_bits) != len(categories):
        raise ValueError("topic_bits and categories must align")
    pairs = [
        (int(bool(bit)), str(cat))
        for bit, cat in zip(topic_bits, categories)
        if cat is not MISSING and cat is not None
    ]
    if not pairs:
        raise DegenerateTable("no observations after pairwise deletion")
    col_values = sorted({cat for _, cat in pairs}, key=_category_sort_key)
    col_index = {cat: j for j, cat in enumerate(col_values)}
    counts = [[0] * len(col_values) for _ in range(2)]
    for bit, cat in pairs:
        counts[bit][col_index[cat]] += 1

    row_labels = ["absent", "present"]
    keep_rows = [i for i in range(2) if any(counts[i])]
    counts = [counts[i] for i in keep_rows]
    row_labels = [row_labels[i] for i in keep_rows]
    keep_cols = [j for j in range(len(col_values)) if any(row[j] for row in counts)]
    counts = [[row[j] for j in keep_cols] for row in counts]
    col_labels = [col_values[j] for j in keep_cols]

    if len(row_labels) < 2 or len(col_labels) < 2:
        raise DegenerateTable(
            f"table degenerates to {len(row_labels)}x{len(col_labels)} after pruning"
        )
    return ContingencyTable(
        row_labels=tuple(row_labels),
        col_labels=tuple(col_labels),
        counts=tuple(tuple(row) for row in counts),
        n=sum(sum(row) for row in counts),
    )


def chi_square_test(table: ContingencyTable) -> ChiSquareResult:
    """Pearson chi-square test of independence on a pruned table."""
    counts = np.asarray(table.counts, dtype=float)
    if counts.shape[0] < 2 or counts.shape[1] < 2:
        raise DegenerateTable("need at least a 2x2 table")
    row_sums = counts.sum(axis=1, keepdims=True)
    col_sums = counts.sum(axis=0, keepdims=True)
    n = counts.sum()
    expected = row_sums @ col_sums / n
    statistic = float(((counts - expected) ** 2 / expected).sum())
    dof = (counts.shape[0] - 1) * (counts.shape[1] - 1)
    return ChiSquareResult(
        statistic=statistic,
        dof=dof,
        p_value=chi_square_sf(statistic, dof),
        min_expected=float(expected.min()),
    )


def band_for(v: float, dof_star: int) -> AssociationBand:
    """Cohen-style strength band, cutoffs scaled by sqrt(dof_star)."""
    scale = math.sqrt(dof_star)
    if v < 0.10 / scale:
        return AssociationBand.NEGLIGIBLE_TO_SMALL
    if v < 0.30 / scale:
        return AssociationBand.SMALL_TO_MEDIUM
    if v < 0.50 / scale:
        return AssociationBand.MEDIUM_TO_LARGE
    return AssociationBand.VERY_LARGE


def cramers_v(chi: ChiSquareResult, table: ContingencyTable) -> CramersVResult:
    rows, cols = table.shape
    dof_star = min(rows - 1, cols - 1)
    v = math.sqrt(chi.statistic / (table.n * dof_star))
    return CramersVResult(v=v, dof_star=dof_star, band=band_for(v, dof_star))


def point_biserial(topic_bits: Sequence[int], y: Sequence[float]) -> PointBiserialResult:
    """Point-biserial correlation of a binary indicator with a numeric variable.

    Equals the Pearson correlation; the two-sided p-value comes from the
    Student-t transform with n-2 degrees of freedom.
    """
    if len(topic_bits) != len(y):
        raise ValueError("topic_bits and y must align")
    bits = [int(bool(b)) for b in topic_bits]
    values = [float(v) for v in y]
    n = len(values)
    if n < 3:
        raise ValueError("need at least 3 observations")
    group1 = [v for b, v in zip(bits, values) if b == 1]
    group0 = [v for b, v in zip(bits, values) if b == 0]
    if not group1 or not group0:
        raise SingleGroup("both indicator groups must be non-empty")
    mean_all = sum(values) / n
    s_n = math.sqrt(sum((v - mean_all) ** 2 for v in values) / n)
    if s_n == 0.0:
        raise ConstantInput("numeric variable is constant")
    p = len(group1) / n
    q = 1.0 - p
    r = ((sum(group1) / len(group1)) - (sum(group0) / len(group0))) / s_n * math.sqrt(p * q)
    r = max(-1.0, min(1.0, r))
    if abs(r) >= 1.0 - 1e-15:
        t_stat = math.inf if r > 0 else -math.inf
        p_value = 0.0
    else:
        t_stat = r * math.sqrt((n - 2) / (1.0 - r * r))
        p_value = student_t_sf_two_sided(t_stat, n - 2)
    return PointBiserialResult(r=r, t_stat=t_stat, p_value=p_value, n=n)


def top_box(rating: int, rating_range: tuple[int, int] = (0, 10)) -> int:
    """Binarize an overall rating: 1 for the top box (9 or 10), else 0."""
    lo, hi = rating_range
    if not lo <= rating <= hi:
        raise OutOfRange(f"rating {rating} outside declared range {lo}-{hi}")
    return 1 if rating >= 9 else 0


# --- proportional-odds ordinal logistic regression ---


@dataclass(frozen=True)
class OrdinalLogitModel:
    thresholds: tuple[float, ...]
    coefficients: tuple[float, ...]
    coefficient_se: tuple[float, ...]
    coefficient_p_values: tuple[float, ...]
    nll: float
    converged: bool
    iterations: int
    level_values: tuple[int, ...]

    def cumulative_probabilities(self, x: Sequence[float]) -> tuple[float, ...]:
        """P(Y <= level_j | x) for each internal threshold j."""
        eta = float(np.dot(np.asarray(x, dtype=float), np.asarray(self.coefficients)))
        return tuple(_sigmoid_scalar(theta - eta) for theta in self.thresholds)


def _sigmoid_scalar(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _thresholds_from_params(params: np.ndarray, n_thresholds: int) -> np.ndarray:
    # first threshold is free, later ones add exponentials of the raw increments
    theta = np.empty(n_thresholds)
    theta[0] = params[0]
    if n_thresholds > 1:
        theta[1:] = params[0] + np.cumsum(np.exp(params[1:n_thresholds]))
    return theta


def _theta_space_nll_grad(
    theta: np.ndarray, beta: np.ndarray, X: np.ndarray, y_codes: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Negative log-likelihood and its gradient w.r.t. (theta, beta)."""
    n_thresholds = theta.shape[0]
    eta = X @ beta
    hi = np.where(y_codes < n_thresholds, theta[np.minimum(y_codes, n_thresholds - 1)] - eta, np.inf)
    lo = np.where(y_codes > 0, theta[np.maximum(y_codes - 1, 0)] - eta, -np.inf)

    f_hi = np.where(np.isfinite(hi), _sigmoid(np.where(np.isfinite(hi), hi, 0.0)), 1.0)
    f_lo = np.where(np.isfinite(lo), _sigmoid(np.where(np.isfinite(lo), lo, 0.0)), 0.0)
    prob = np.clip(f_hi - f_lo, 1e-300, None)
    nll = -float(np.log(prob).sum())

    pdf_hi = np.where(np.isfinite(hi), f_hi * (1.0 - f_hi), 0.0)
    pdf_lo = np.where(np.isfinite(lo), f_lo * (1.0 - f_lo), 0.0)

    grad_theta = np.zeros(n_thresholds)
    hi_weight = pdf_hi / prob
    lo_weight = pdf_lo / prob
    has_hi = y_codes < n_thresholds
    has_lo = y_codes > 0
    np.add.at(grad_theta, y_codes[has_hi], -hi_weight[has_hi])
    np.add.at(grad_theta, y_codes[has_lo] - 1, lo_weight[has_lo])
    grad_beta = X.T @ (hi_weight - lo_weight)
    return nll, grad_theta, grad_beta


def ordinal_nll_gradient(
    params: np.ndarray, X: np.ndarray, y_codes: np.ndarray, n_levels: int
) -> tuple[float, np.ndarray]:
    """NLL and analytic gradient in the unconstrained parameterization.

    ``params`` is (t1, d_2..d_{J-1}, beta_1..beta_k) with theta_1 = t1 and
    theta_j = theta_{j-1} + exp(d_j), which keeps thresholds increasing.
    """
    params = np.asarray(params, dtype=float)
    n_thresholds = n_levels - 1
    theta = _thresholds_from_params(params, n_thresholds)
    beta = params[n_thresholds:]
    nll, grad_theta, grad_beta = _theta_space_nll_grad(theta, beta, X, y_codes)

    grad = np.empty_like(params)
    grad[0] = grad_theta.sum()
    for l in range(1, n_thresholds):
        grad[l] = math.exp(params[l]) * grad_theta[l:].sum()
    grad[n_thresholds:] = grad_beta
    return nll, grad


def _numeric_hessian(fn_grad, params: np.ndarray, h: float = 1e-6) -> np.ndarray:
    p = params.shape[0]
    hessian = np.empty((p, p))
    for j in range(p):
        step = np.zeros(p)
        step[j] = h
        _, g_plus = fn_grad(params + step)
        _, g_minus = fn_grad(params - step)
        hessian[:, j] = (g_plus - g_minus) / (2 * h)
    return 0.5 * (hessian + hessian.T)


def fit_ordinal_logit(
    X: Sequence[Sequence[int]],
    y: Sequence[int],
    max_iterations: int = 200,
    gradient_tolerance: float = 1e-8,
) -> OrdinalLogitModel:
    """Fit P(Y <= j | x) = logistic(theta_j - x.beta) by Newton iterations.

    Thresholds start at the empirical cumulative log-odds, coefficients at
    zero; the unconstrained reparameterization keeps thresholds strictly
    increasing throughout. Wald p-values come from the observed-information
    covariance at the optimum.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y)
    n, k = X.shape
    levels = np.unique(y)
    n_levels = int(levels.shape[0])
    if n_levels < 2:
        raise ValueError("need at least 2 observed rating levels")
    if n <= k + n_levels:
        raise ValueError(f"need more than {k + n_levels} observations, got {n}")
    y_codes = np.searchsorted(levels, y)
    n_thresholds = n_levels - 1

    # closed-form start: theta from empirical cumulative log-odds, beta = 0
    cumulative = np.cumsum(np.bincount(y_codes, minlength=n_levels))[:-1] / n
    theta0 = np.log(cumulative / (1.0 - cumulative))
    params = np.zeros(n_thresholds + k)
    params[0] = theta0[0]
    if n_thresholds > 1:
        params[1:n_thresholds] = np.log(np.diff(theta0))

    def fn_grad(p):
        return ordinal_nll_gradient(p, X, y_codes, n_levels)

    nll, grad = fn_grad(params)
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        if np.max(np.abs(grad)) < gradient_tolerance:
            converged = True
            break
        hessian = _numeric_hessian(fn_grad, params)
        try:
            step = np.linalg.solve(hessian, -grad)
        except np.linalg.LinAlgError:
            step = -grad
        if not np.all(np.isfinite(step)):
            step = -grad
        # damped update: halve until the objective actually decreases
        new_params, new_nll, new_grad = params, nll, grad
        scale = 1.0
        for _ in range(40):
            candidate = params + scale * step
            candidate_nll, candidate_grad = fn_grad(candidate)
            if candidate_nll <= nll:
                new_params, new_nll, new_grad = candidate, candidate_nll, candidate_grad
                break
            scale *= 0.5
        params, nll, grad = new_params, new_nll, new_grad
        theta = _thresholds_from_params(params, n_thresholds)
        beta = params[n_thresholds:]
        if np.max(np.abs(beta), initial=0.0) > SEPARATION_MAGNITUDE or np.max(
            np.abs(theta)
        ) > SEPARATION_MAGNITUDE:
            raise SeparationDetected(
                "coefficient magnitudes diverged beyond "
                f"{SEPARATION_MAGNITUDE}; data are likely separated"
            )
    else:
        iterations = max_iterations

    theta = _thresholds_from_params(params, n_thresholds)
    beta = params[n_thresholds:]

    # observed information in the original (theta, beta) space
    def original_grad(tb):
        _, g_theta, g_beta = _theta_space_nll_grad(
            tb[:n_thresholds], tb[n_thresholds:], X, y_codes
        )
        return None, np.concatenate([g_theta, g_beta])

    info = _numeric_hessian(original_grad, np.concatenate([theta, beta]))
    try:
        covariance = np.linalg.inv(info)
        se = np.sqrt(np.clip(np.diag(covariance)[n_thresholds:], 0.0, None))
    except np.linalg.LinAlgError:
        se = np.full(k, math.nan)
    p_values = tuple(
        normal_sf_two_sided(b / s) if s > 0 and math.isfinite(s) else math.nan
        for b, s in zip(beta, se)
    )
    return OrdinalLogitModel(
        thresholds=tuple(float(t) for t in theta),
        coefficients=tuple(float(b) for b in beta),
        coefficient_se=tuple(float(s) for s in se),
        coefficient_p_values=p_values,
        nll=float(nll),
        converged=converged,
        iterations=iterations,
        level_values=tuple(int(v) for v in levels),
    )


# --- grid and summary assembly ---


@dataclass(frozen=True)
class GridCell:
    topic: str
    variable: str
    status: str  # "significant" | "not_significant" | "degenerate"
    p_value: float | None = None
    v: float | None = None
    band: AssociationBand | None = None
    low_expected: bool = False

    def display(self) -> str:
        if self.status == "degenerate":
            return "n/a"
        if self.status == "significant" and self.band is not None:
            return self.band.value
        return ""


@dataclass(frozen=True)
class AssociationGrid:
    topics: tuple[str, ...]
    variables: tuple[str, ...]
    alpha: float
    cells: tuple[GridCell, ...]

    def cell(self, topic: str, variable: str) -> GridCell:
        index = self.topics.index(topic) * len(self.variables) + self.variables.index(
            variable
        )
        return self.cells[index]


def _variable_value(record: SurveyRecord, variable: str):
    for mapping in (record.demographics, record.mc_answers, record.ratings):
        if variable in mapping:
            return mapping[variable]
    return MISSING


def association_matrix(
    predictions: Mapping[str, LabelVector],
    records: Sequence[SurveyRecord],
    variables: Sequence[str],
    alpha: float = 0.05,
) -> AssociationGrid:
    """Chi-square + Cramer's V for every (topic, variable) pair.

    Cells stay blank when p >= alpha and are marked n/a when the table
    degenerates; per-cell failures never abort the grid.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    matched = [r for r in records if r.comment_id in predictions]
    names = topic_names()
    cells: list[GridCell] = []
    for topic_index, topic in enumerate(names):
        bits = [int(predictions[r.comment_id][topic_index]) for r in matched]
        for variable in variables:
            values = [_variable_value(r, variable) for r in matched]
            try:
                table = build_contingency(bits, values)
                chi = chi_square_test(table)
                strength = cramers_v(chi, table)
            except DegenerateTable:
                cells.append(GridCell(topic=topic, variable=variable, status="degenerate"))
                continue
            status = "significant" if chi.p_value < alpha else "not_significant"
            cells.append(
                GridCell(
                    topic=topic,
                    variable=variable,
                    status=status,
                    p_value=chi.p_value,
                    v=strength.v,
                    band=strength.band if status == "significant" else None,
                    low_expected=chi.low_expected,
                )
            )
    return AssociationGrid(
        topics=tuple(names), variables=tuple(variables), alpha=alpha, cells=tuple(cells)
    )


@dataclass(frozen=True)
class TopicEffect:
    topic: str
    coefficient: float | None
    coefficient_p: float | None
    correlation: float | None
    correlation_p: float | None
    note: str = ""


@dataclass(frozen=True)
class RatingAnalysis:
    rating_name: str
    n: int
    effects: tuple[TopicEffect, ...]
    model: OrdinalLogitModel | None
    top_box_rate: float


def rating_analysis(
    predictions: Mapping[str, LabelVector],
    records: Sequence[SurveyRecord],
    rating_name: str,
    rating_range: tuple[int, int] = (0, 10),
    joint: bool = True,
) -> RatingAnalysis:
    """Ordinal-logit coefficients and point-biserial correlations of every
    topic against one ordinal rating (Top-Box rate reported alongside)."""
    rows: list[tuple[LabelVector, int]] = []
    for record in records:
        if record.comment_id not in predictions:
            continue
        value = record.ratings.get(rating_name, MISSING)
        if value is MISSING:
            continue
        rows.append((predictions[record.comment_id], int(value)))
    if not rows:
        raise ValueError(f"no records carry rating {rating_name!r}")

    names = topic_names()
    X = [[int(b) for b in vec] for vec, _ in rows]
    y = [rating for _, rating in rows]
    top_rate = sum(top_box(r, rating_range) for r in y) / len(y)

    model: OrdinalLogitModel | None = None
    coefficients: dict[int, tuple[float | None, float | None, str]] = {}
    if joint:
        try:
            model = fit_ordinal_logit(X, y)
            for i in range(len(names)):
                coefficients[i] = (model.coefficients[i], model.coefficient_p_values[i], "")
        except (SeparationDetected, ValueError) as exc:
            for i in range(len(names)):
                coefficients[i] = (None, None, str(exc))
    else:
        for i in range(len(names)):
            column = [[row[i]] for row in X]
            try:
                single = fit_ordinal_logit(column, y)
                coefficients[i] = (single.coefficients[0], single.coefficient_p_values[0], "")
            except (SeparationDetected, ValueError) as exc:
                coefficients[i] = (None, None, str(exc))

    effects = []
    for i, topic in enumerate(names):
        coefficient, coefficient_p, note = coefficients[i]
        bits = [row[i] for row in X]
        try:
            pb = point_biserial(bits, y)
            correlation, correlation_p = pb.r, pb.p_value
        except (SingleGroup, ConstantInput, ValueError) as exc:
            correlation, correlation_p = None, None
            note = (note + "; " if note else "") + str(exc)
        effects.append(
            TopicEffect(
                topic=topic,
                coefficient=coefficient,
                coefficient_p=coefficient_p,
                correlation=correlation,
                correlation_p=correlation_p,
                note=note,
            )
        )
    return RatingAnalysis(
        rating_name=rating_name,
        n=len(rows),
        effects=tuple(effects),
        model=model,
        top_box_rate=top_rate,
    )
