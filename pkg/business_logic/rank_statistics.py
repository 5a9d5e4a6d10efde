"""
Rank-based statistics: Mann-Whitney U, ROC and precision-recall sweeps,
Spearman correlation and Bonferroni correction.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

EXACT_LIMIT = 25
CONTINUITY = 0.5


@dataclass(frozen=True)
class UTest:
    u_statistic: float
    p_value: float
    method: str


@lru_cache(maxsize=None)
def u_distribution(n1: int, n2: int) -> Tuple[int, ...]:
    """
    Number of orderings of n1 + n2 distinct values giving each U = 0..n1*n2,
    where U counts (a, b) pairs with a from the first group above b.
    """
    if n1 == 0 or n2 == 0:
        return (1,)
    # the largest value comes from the first group (beats all n2) or from the second
    with_first = u_distribution(n1 - 1, n2)
    with_second = u_distribution(n1, n2 - 1)
    counts = [0] * (n1 * n2 + 1)
    for u, ways in enumerate(with_first):
        counts[u + n2] += ways
    for u, ways in enumerate(with_second):
        counts[u] += ways
    return tuple(counts)


def exact_p_value(u: float, n1: int, n2: int) -> float:
    """Two-sided p = min(1, 2 * min(P(U <= u), P(U >= u)))."""
    counts = np.asarray(u_distribution(n1, n2), dtype=np.float64)
    total = counts.sum()
    k = int(round(u))
    lower = counts[: k + 1].sum() / total
    upper = counts[k:].sum() / total
    return float(min(1.0, 2.0 * min(lower, upper)))


def mann_whitney_u(first: Sequence[float], second: Sequence[float]) -> UTest:
    """
    U of the first group from midranks. Exact enumeration when the groups
    total at most 25 values without ties, otherwise the tie-corrected normal
    approximation with continuity correction.
    """
    a = np.asarray(first, dtype=float)
    b = np.asarray(second, dtype=float)
    n1, n2 = a.size, b.size
    pooled = np.concatenate([a, b])
    ranks = stats.rankdata(pooled)
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    _, tie_counts = np.unique(pooled, return_counts=True)
    has_ties = bool(np.any(tie_counts > 1))
    if n1 + n2 <= EXACT_LIMIT and not has_ties:
        return UTest(u, exact_p_value(u, n1, n2), "exact")

    n = n1 + n2
    mean = n1 * n2 / 2.0
    tie_term = float(np.sum(tie_counts.astype(float) ** 3 - tie_counts)) / (n * (n - 1)) if n > 1 else 0.0
    variance = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if variance <= 0:
        return UTest(u, 1.0, "asymptotic")
    z = max(abs(u - mean) - CONTINUITY, 0.0) / math.sqrt(variance)
    return UTest(u, float(min(1.0, 2.0 * stats.norm.sf(z))), "asymptotic")


def bonferroni(p_values: Sequence[float]) -> List[float]:
    """min(1, p * K) with K the number of finite p-values; NaN stays NaN."""
    tested = sum(1 for p in p_values if not math.isnan(p))
    return [p if math.isnan(p) else min(1.0, p * tested) for p in p_values]


def _sweep(scores: np.ndarray, positives: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Cumulative true/false positive counts at each unique score, descending."""
    order = np.argsort(-scores, kind="mergesort")
    ordered_scores = scores[order]
    ordered_labels = positives[order]
    last_of_run = np.r_[np.diff(ordered_scores) != 0, True]
    tp = np.cumsum(ordered_labels)[last_of_run]
    fp = np.cumsum(~ordered_labels)[last_of_run]
    return tp.astype(float), fp.astype(float)


def roc_curve(scores: Sequence[float], positives: Sequence[bool]) -> Tuple[np.ndarray, np.ndarray]:
    """(FPR, TPR) from (0, 0), one point per unique score threshold."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(positives, dtype=bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes")
    tp, fp = _sweep(s, y)
    return np.r_[0.0, fp / n_neg], np.r_[0.0, tp / n_pos]


def roc_auc(scores: Sequence[float], positives: Sequence[bool]) -> float:
    fpr, tpr = roc_curve(scores, positives)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def precision_recall(scores: Sequence[float], positives: Sequence[bool]) -> Tuple[np.ndarray, np.ndarray]:
    """(recall, precision) per unique score threshold, highest first."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(positives, dtype=bool)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("Precision-recall needs positive samples")
    tp, fp = _sweep(s, y)
    return tp / n_pos, tp / (tp + fp)


def average_precision(scores: Sequence[float], positives: Sequence[bool]) -> float:
    """Sum over thresholds of (R_k - R_{k-1}) * P_k."""
    recall, precision = precision_recall(scores, positives)
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """
    Pearson correlation of midranks over pairs where both values are
    present; NaN when fewer than two pairs remain or either side is constant.
    """
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    present = np.isfinite(a) & np.isfinite(b)
    if int(present.sum()) < 2:
        return float("nan")
    ra = stats.rankdata(a[present])
    rb = stats.rankdata(b[present])
    da = ra - ra.mean()
    db = rb - rb.mean()
    denominator = math.sqrt(float(np.sum(da * da)) * float(np.sum(db * db)))
    if denominator == 0:
        return float("nan")
    return float(np.clip(np.sum(da * db) / denominator, -1.0, 1.0))
