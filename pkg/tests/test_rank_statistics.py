import math
from itertools import combinations

import numpy as np
import pytest
from scipy import stats

from business_logic.rank_statistics import (
    average_precision,
    bonferroni,
    mann_whitney_u,
    precision_recall,
    roc_auc,
    roc_curve,
    spearman,
    u_distribution,
)


def test_u_distribution_counts_orderings() -> None:
    assert u_distribution(2, 2) == (1, 1, 2, 1, 1)
    assert sum(u_distribution(3, 4)) == math.comb(7, 3)


def test_separated_groups() -> None:
    low = mann_whitney_u([1, 2, 3], [4, 5, 6])
    high = mann_whitney_u([4, 5, 6], [1, 2, 3])

    assert low.u_statistic == 0.0
    assert high.u_statistic == 9.0
    assert low.p_value == pytest.approx(0.1)
    assert high.p_value == pytest.approx(0.1)
    assert low.method == "exact"


def test_exact_p_value_agrees_with_scipy(rng) -> None:
    first = rng.normal(0.0, 1.0, size=6)
    second = rng.normal(0.8, 1.0, size=8)

    ours = mann_whitney_u(first, second)
    theirs = stats.mannwhitneyu(first, second, alternative="two-sided", method="exact")

    assert ours.u_statistic == pytest.approx(theirs.statistic)
    assert ours.p_value == pytest.approx(theirs.pvalue)


def test_ties_use_the_normal_approximation() -> None:
    first = [1, 2, 2, 3, 5]
    second = [2, 4, 4, 6, 7, 8]

    ours = mann_whitney_u(first, second)
    theirs = stats.mannwhitneyu(first, second, alternative="two-sided", method="asymptotic", use_continuity=True)

    assert ours.method == "asymptotic"
    assert ours.u_statistic == pytest.approx(theirs.statistic)
    assert ours.p_value == pytest.approx(theirs.pvalue)


def test_large_groups_are_asymptotic(rng) -> None:
    result = mann_whitney_u(rng.normal(size=15), rng.normal(size=15))

    assert result.method == "asymptotic"
    assert 0.0 <= result.p_value <= 1.0


def test_roc_auc_reference_values() -> None:
    scores = [0.1, 0.4, 0.35, 0.8]

    assert roc_auc(scores, [False, False, True, True]) == pytest.approx(0.75)
    assert roc_auc(scores, [True, True, False, False]) == pytest.approx(0.25)


def test_tied_scores_form_one_threshold() -> None:
    fpr, tpr = roc_curve([0.5, 0.5], [True, False])

    assert fpr.tolist() == [0.0, 1.0]
    assert tpr.tolist() == [0.0, 1.0]
    assert roc_auc([0.5, 0.5], [True, False]) == pytest.approx(0.5)


def test_roc_needs_both_classes() -> None:
    with pytest.raises(ValueError):
        roc_curve([0.1, 0.2], [True, True])


def test_average_precision() -> None:
    scores = [0.1, 0.4, 0.35, 0.8]
    positives = [False, False, True, True]

    recall, precision = precision_recall(scores, positives)

    assert recall.tolist() == [0.5, 0.5, 1.0, 1.0]
    assert precision[0] == 1.0
    assert average_precision(scores, positives) == pytest.approx(5 / 6)


def test_spearman_small_case() -> None:
    assert spearman([1, 2, 3], [3, 1, 2]) == pytest.approx(-0.5)


def test_spearman_drops_incomplete_pairs() -> None:
    assert spearman([1, 2, float("nan"), 4], [2, 4, 5, 8]) == pytest.approx(1.0)
    assert math.isnan(spearman([1, float("nan")], [1, 2]))
    assert math.isnan(spearman([3, 3, 3], [1, 2, 3]))


def test_spearman_agrees_with_scipy(rng) -> None:
    x = rng.normal(size=30)
    y = x + rng.normal(scale=0.7, size=30)

    assert spearman(x, y) == pytest.approx(stats.spearmanr(x, y)[0])


def test_bonferroni_counts_only_tested_features() -> None:
    corrected = bonferroni([0.01, float("nan"), 0.4])

    assert corrected[0] == pytest.approx(0.02)
    assert math.isnan(corrected[1])
    assert corrected[2] == pytest.approx(0.8)
    assert bonferroni([0.6, 0.7]) == [1.0, 1.0]


def test_average_precision_with_interleaved_labels() -> None:
    assert average_precision([1, 2, 3, 4], [False, True, False, True]) == pytest.approx(5 / 6)


@pytest.mark.parametrize("seed", range(20))
def test_auc_equals_pair_counting(seed: int) -> None:
    rng = np.random.default_rng(seed)
    scores = rng.integers(0, 6, size=12).astype(float)
    positives = rng.permutation(np.r_[np.ones(5, dtype=bool), np.zeros(7, dtype=bool)])

    pos, neg = scores[positives], scores[~positives]
    pairs = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)

    assert roc_auc(scores, positives) == pytest.approx(pairs / (pos.size * neg.size), abs=1e-12)


@pytest.mark.parametrize("n1,n2", [(1, 1), (2, 3), (4, 4), (3, 7)])
def test_exact_distribution_matches_enumeration(n1: int, n2: int) -> None:
    counts = [0] * (n1 * n2 + 1)
    for chosen in combinations(range(n1 + n2), n1):
        rest = [v for v in range(n1 + n2) if v not in chosen]
        counts[sum(1 for a in chosen for b in rest if a > b)] += 1

    assert list(u_distribution(n1, n2)) == counts
