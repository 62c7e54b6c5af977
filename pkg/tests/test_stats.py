import math
from itertools import permutations

import numpy as np
import pytest

from ..exceptions import DegenerateStatistic
from ..models import Decision, Direction, PosthocPolicy, RankMatrix, ResultsMatrix
from ..stats import (
    critical_difference,
    decide,
    friedman,
    friedman_from_mean_ranks,
    nemenyi,
    rank_rows,
    report_from_mean_ranks,
    report_from_results,
)

CLASSIFIERS = ["RF", "CART", "MLP", "AB", "XGB", "GBM", "ETC"]

HOLDOUT_MEAN_RANKS = {
    "accuracy": [4.875, 2.25, 3.25, 1.25, 6.0, 5.75, 4.625],
    "specificity": [5.75, 2.0, 3.25, 1.5, 6.375, 4.625, 4.5],
    "sensitivity": [2.875, 3.25, 2.25, 2.0, 5.5, 6.25, 5.875],
    "fpr": [2.25, 6.0, 4.75, 6.5, 1.625, 3.375, 3.5],
    "auc": [3.75, 1.5, 3.0, 2.875, 6.0, 5.875, 5.0],
}
KFOLD_MEAN_RANKS = {
    "accuracy": [4.0, 4.375, 4.25, 4.625, 3.125, 4.0, 3.625],
    "specificity": [4.0, 4.25, 5.0, 4.0, 3.375, 3.25, 4.125],
    "sensitivity": [4.5, 3.375, 3.375, 4.5, 4.5, 4.5, 3.25],
    "fpr": [4.625, 3.5, 2.75, 4.75, 4.25, 4.625, 3.5],
    "auc": [3.625, 1.5, 3.125, 2.875, 6.125, 5.625, 5.125],
}


def _table(mean_ranks: dict) -> dict:
    return {m: dict(zip(CLASSIFIERS, ranks)) for m, ranks in mean_ranks.items()}


def _pair(result, x: str, y: str):
    for pair in result.pairs:
        if {pair.x, pair.y} == {x, y}:
            return pair
    raise AssertionError(f"no pair {x} vs {y}")


# Ranking
def test_rank_rows_best_gets_highest_rank():
    matrix = ResultsMatrix(
        values=[[0.9, 0.8, 0.7], [0.5, 0.5, 0.1]],
        dataset_labels=["a", "b"],
        classifier_labels=["x", "y", "z"],
    )
    ranks = rank_rows(matrix)
    assert ranks.ranks == [[3.0, 2.0, 1.0], [2.5, 2.5, 1.0]]
    assert ranks.rank_sums == [5.5, 4.5, 2.0]
    assert ranks.mean_ranks == [2.75, 2.25, 1.0]


def test_rank_rows_lower_better_ranks_raw_values():
    matrix = ResultsMatrix(
        values=[[0.1, 0.2, 0.3], [0.05, 0.01, 0.02]],
        direction=Direction.LOWER_BETTER,
        dataset_labels=["a", "b"],
        classifier_labels=["x", "y", "z"],
    )
    assert rank_rows(matrix).ranks == [[1.0, 2.0, 3.0], [3.0, 1.0, 2.0]]


def test_fpr_ranks_complement_specificity_ranks():
    specificity = [[0.9, 0.8, 0.7], [0.95, 0.99, 0.95]]
    labels = dict(dataset_labels=["a", "b"], classifier_labels=["x", "y", "z"])
    spec_ranks = rank_rows(ResultsMatrix(values=specificity, metric="specificity", **labels))
    fpr_ranks = rank_rows(
        ResultsMatrix(
            values=[[1.0 - v for v in row] for row in specificity],
            direction=Direction.LOWER_BETTER,
            metric="fpr",
            **labels,
        )
    )
    k = 3
    for spec_row, fpr_row in zip(spec_ranks.ranks, fpr_ranks.ranks):
        assert [s + f for s, f in zip(spec_row, fpr_row)] == [k + 1] * k
    assert [s + f for s, f in zip(spec_ranks.mean_ranks, fpr_ranks.mean_ranks)] == [4.0] * k


def test_published_fpr_mean_ranks_complement_specificity():
    table = HOLDOUT_MEAN_RANKS
    totals = [s + f for s, f in zip(table["specificity"], table["fpr"])]
    assert totals == pytest.approx([8.0] * 7)


def test_rank_sums_total_on_random_matrices():
    rng = np.random.default_rng(11)
    for _ in range(50):
        d, k = rng.integers(2, 8), rng.integers(2, 9)
        values = rng.integers(0, 4, size=(d, k)).astype(float).tolist()
        matrix = ResultsMatrix(
            values=values,
            dataset_labels=[f"d{i}" for i in range(d)],
            classifier_labels=[f"c{j}" for j in range(k)],
        )
        ranks = rank_rows(matrix)
        assert sum(ranks.rank_sums) == pytest.approx(d * k * (k + 1) / 2)


def test_results_matrix_rejects_single_dataset():
    with pytest.raises(ValueError):
        ResultsMatrix(values=[[0.1, 0.2]], dataset_labels=["a"], classifier_labels=["x", "y"])


def test_results_matrix_rejects_missing_cells():
    with pytest.raises(ValueError):
        ResultsMatrix(
            values=[[0.1, float("nan")], [0.3, 0.2]],
            dataset_labels=["a", "b"],
            classifier_labels=["x", "y"],
        )


# Friedman
# published statistics are truncated, not rounded, to 4 decimals
def test_friedman_accuracy_holdout():
    result = friedman_from_mean_ranks(HOLDOUT_MEAN_RANKS["accuracy"], d=4)
    assert result.q == pytest.approx(16.6339, abs=5e-5)
    assert result.f_statistic == pytest.approx(6.7745, abs=5e-5)
    assert (result.df1, result.df2) == (6, 18)
    assert result.p_value == pytest.approx(0.0007, abs=5e-4)
    assert result.decisions == {"0.05": Decision.REJECT, "0.1": Decision.REJECT}


@pytest.mark.parametrize(
    "metric, f_statistic, p_value",
    [
        ("accuracy", 6.7745, 0.0007),
        ("specificity", 7.7091, 0.0003),
        ("sensitivity", 7.1434, 0.0005),
        ("fpr", 7.7091, 0.0003),
        ("auc", 4.7020, 0.0048),
    ],
)
def test_friedman_holdout_table(metric, f_statistic, p_value):
    result = friedman_from_mean_ranks(HOLDOUT_MEAN_RANKS[metric], d=4)
    assert result.f_statistic == pytest.approx(f_statistic, abs=1e-4)
    assert result.p_value == pytest.approx(p_value, abs=5e-4)


@pytest.mark.parametrize(
    "table, metric, printed",
    [
        (HOLDOUT_MEAN_RANKS, "specificity", 7.7091),
        (HOLDOUT_MEAN_RANKS, "fpr", 7.7091),
        (KFOLD_MEAN_RANKS, "specificity", 0.2346),
        (KFOLD_MEAN_RANKS, "sensitivity", 0.2740),
    ],
)
def test_friedman_statistic_truncates_to_printed_value(table, metric, printed):
    result = friedman_from_mean_ranks(table[metric], d=4)
    assert math.floor(result.f_statistic * 1e4) / 1e4 == pytest.approx(printed, abs=1e-9)


@pytest.mark.parametrize(
    "metric, f_statistic, p_value, decision",
    [
        ("accuracy", 0.1698, 0.9816, Decision.ACCEPT),
        ("specificity", 0.2346, 0.9594, Decision.ACCEPT),
        ("sensitivity", 0.2740, 0.9418, Decision.ACCEPT),
        ("fpr", 0.4242, 0.8532, Decision.ACCEPT),
        ("auc", 4.5294, 0.0057, Decision.REJECT),
    ],
)
def test_friedman_kfold_table(metric, f_statistic, p_value, decision):
    result = friedman_from_mean_ranks(KFOLD_MEAN_RANKS[metric], d=4)
    assert result.f_statistic == pytest.approx(f_statistic, abs=1e-4)
    assert result.p_value == pytest.approx(p_value, abs=5e-4)
    assert result.decisions["0.05"] == decision
    assert result.decisions["0.1"] == decision


def test_friedman_all_tied():
    ranks = RankMatrix.from_mean_ranks([2.0, 2.0, 2.0], d=5)
    result = friedman(ranks)
    assert result.q == 0.0
    assert result.f_statistic == 0.0
    assert result.p_value == pytest.approx(1.0)


def test_friedman_degenerate_when_every_row_agrees():
    # identical orderings on every dataset push Q to its bound d(k-1)
    ranks = RankMatrix.from_mean_ranks([1.0, 2.0, 3.0], d=4)
    with pytest.raises(DegenerateStatistic):
        friedman(ranks)


def test_friedman_invariant_under_monotone_transform():
    rng = np.random.default_rng(5)
    values = rng.random((5, 4))
    plain = ResultsMatrix(
        values=values.tolist(),
        dataset_labels=[f"d{i}" for i in range(5)],
        classifier_labels=list("abcd"),
    )
    warped = plain.copy(update={"values": (np.exp(3 * values) - 7).tolist()})
    assert friedman(rank_rows(plain)).f_statistic == pytest.approx(
        friedman(rank_rows(warped)).f_statistic
    )


def test_friedman_q_matches_rank_enumeration():
    # small matrices with distinct values: ranks straight from sort order
    rng = np.random.default_rng(3)
    for d in (2, 3):
        for k in (2, 3, 4):
            values = np.array([rng.permutation(k) + rng.random() for _ in range(d)])
            ranks = np.zeros((d, k))
            for i, row in enumerate(values):
                for r, j in enumerate(sorted(range(k), key=lambda j: row[j]), start=1):
                    ranks[i, j] = r
            sums = ranks.sum(axis=0)
            q = 12 / (d * k * (k + 1)) * sum((s - d * (k + 1) / 2) ** 2 for s in sums)
            matrix = ResultsMatrix(
                values=values.tolist(),
                dataset_labels=[str(i) for i in range(d)],
                classifier_labels=[str(j) for j in range(k)],
            )
            rm = rank_rows(matrix)
            if math.isclose(q, d * (k - 1)):
                continue
            assert friedman(rm).q == pytest.approx(q, abs=1e-12)


# Nemenyi
@pytest.mark.parametrize(
    "metric, x, y, gamma, p_adjusted, at_05, at_10",
    [
        ("accuracy", "AB", "XGB", 3.1096, 0.0393, "R", "R"),
        ("accuracy", "AB", "GBM", 2.9459, 0.0676, "A", "R"),
        ("accuracy", "AB", "RF", 2.3731, 0.3704, "A", "A"),
        ("accuracy", "AB", "ETC", 2.2094, 0.57, "A", "A"),
        ("accuracy", "CART", "ETC", 1.5548, 1.0, "A", "A"),
        ("specificity", "AB", "XGB", 3.1914, 0.0297, "R", "R"),
        ("specificity", "XGB", "CART", 2.8641, 0.0878, "A", "R"),
        ("sensitivity", "AB", "GBM", 2.7822, 0.1133, "A", "A"),
        ("sensitivity", "AB", "ETC", 2.5367, 0.2349, "A", "A"),
        ("fpr", "AB", "XGB", 3.1914, 0.0297, "R", "R"),
        ("fpr", "XGB", "CART", 2.8641, 0.0878, "A", "R"),
        ("auc", "GBM", "CART", 2.8641, 0.0878, "A", "R"),
        ("auc", "XGB", "CART", 2.9459, 0.0676, "A", "R"),
        ("auc", "CART", "ETC", 2.2912, 0.4608, "A", "A"),
    ],
)
def test_nemenyi_holdout_pairs(metric, x, y, gamma, p_adjusted, at_05, at_10):
    result = nemenyi(HOLDOUT_MEAN_RANKS[metric], d=4, labels=CLASSIFIERS)
    pair = _pair(result, x, y)
    assert pair.gamma == pytest.approx(gamma, abs=1e-4)
    assert pair.p_adjusted == pytest.approx(p_adjusted, abs=2e-3)
    assert pair.decisions["0.05"].value == at_05
    assert pair.decisions["0.1"].value == at_10


@pytest.mark.parametrize(
    "x, y, gamma, p_adjusted, at_10",
    [
        ("XGB", "CART", 3.0277, 0.0517, "R"),
        ("CART", "GBM", 2.7004, 0.1454, "A"),
        ("AB", "XGB", 2.1276, 0.7007, "A"),
        ("RF", "MLP", 0.3273, 1.0, "A"),
    ],
)
def test_nemenyi_kfold_auc(x, y, gamma, p_adjusted, at_10):
    result = nemenyi(KFOLD_MEAN_RANKS["auc"], d=4, labels=CLASSIFIERS)
    pair = _pair(result, x, y)
    assert pair.gamma == pytest.approx(gamma, abs=1e-4)
    assert pair.p_adjusted == pytest.approx(p_adjusted, abs=2e-3)
    assert pair.decisions["0.05"] == Decision.ACCEPT
    assert pair.decisions["0.1"].value == at_10


def test_nemenyi_pair_count_and_order():
    result = nemenyi(HOLDOUT_MEAN_RANKS["accuracy"], d=4, labels=CLASSIFIERS)
    assert len(result.pairs) == 21
    gammas = [p.gamma for p in result.pairs]
    assert gammas == sorted(gammas, reverse=True)
    assert {result.pairs[0].x, result.pairs[0].y} == {"AB", "XGB"}


def test_nemenyi_identical_ranks():
    result = nemenyi([3.0, 3.0], d=4, labels=["a", "b"])
    assert result.pairs[0].gamma == 0.0
    assert result.pairs[0].p_adjusted == 1.0


def test_nemenyi_symmetric():
    forward = nemenyi([1.5, 2.5, 2.0], d=6)
    backward = nemenyi([2.0, 2.5, 1.5], d=6)
    assert sorted(p.gamma for p in forward.pairs) == pytest.approx(
        sorted(p.gamma for p in backward.pairs)
    )


def test_critical_difference_is_the_rejection_boundary():
    cd = critical_difference(2, 4, 0.05)
    above = nemenyi([1.0, 1.0 + cd * 1.001], d=4, labels=["a", "b"]).pairs[0]
    below = nemenyi([1.0, 1.0 + cd * 0.999], d=4, labels=["a", "b"]).pairs[0]
    assert above.decisions["0.05"] == Decision.REJECT
    assert below.decisions["0.05"] == Decision.ACCEPT


def test_p_values_decrease_with_the_statistic():
    pairs = [nemenyi([1.0, 1.0 + gap], d=4).pairs[0] for gap in (0.5, 1.5, 3.0, 5.0)]
    p_values = [p.p_adjusted for p in pairs]
    assert p_values == sorted(p_values, reverse=True)


# Decisions and reports
def test_decide():
    assert decide(0.0007) == {"0.05": Decision.REJECT, "0.1": Decision.REJECT}
    assert decide(0.0676) == {"0.05": Decision.ACCEPT, "0.1": Decision.REJECT}
    assert decide(1.0) == {"0.05": Decision.ACCEPT, "0.1": Decision.ACCEPT}


def test_report_from_mean_ranks_runs_posthoc_on_rejection_only():
    report = report_from_mean_ranks(_table(KFOLD_MEAN_RANKS), d=4)
    by_metric = {t.metric: t for t in report.metrics}
    assert (report.d, report.k) == (4, 7)
    assert by_metric["auc"].nemenyi is not None
    assert by_metric["accuracy"].nemenyi is None


def test_report_always_policy():
    report = report_from_mean_ranks(
        _table(KFOLD_MEAN_RANKS), d=4, posthoc=PosthocPolicy.ALWAYS
    )
    assert all(t.nemenyi is not None for t in report.metrics)


def test_report_skips_metric_with_unanimous_rankings():
    agree = ResultsMatrix(
        values=[[0.9, 0.8], [0.95, 0.7]],
        dataset_labels=["a", "b"],
        classifier_labels=["x", "y"],
    )
    mixed = ResultsMatrix(
        values=[[0.9, 0.8, 0.7], [0.7, 0.95, 0.8], [0.8, 0.7, 0.9]],
        dataset_labels=["a", "b", "c"],
        classifier_labels=["x", "y", "z"],
    )
    assert report_from_results({"accuracy": agree}).metrics == []
    assert len(report_from_results({"auc": mixed}).metrics) == 1


def test_report_from_results_matches_mean_ranks():
    # per-row ranks follow the published accuracy ranks; RF and ETC tie on the last row
    orders = [[5, 2, 4, 1, 7, 6, 3], [5, 2, 4, 1, 7, 6, 3], [3, 2, 4, 1, 5, 7, 6]]
    values = [[0.9 + r / 100 for r in row] for row in orders]
    values.append([0.965, 0.93, 0.91, 0.92, 0.95, 0.94, 0.965])
    matrix = ResultsMatrix(
        values=values,
        dataset_labels=["d1", "d2", "d3", "d4"],
        classifier_labels=CLASSIFIERS,
        metric="accuracy",
    )
    report = report_from_results({"accuracy": matrix})
    test = report.metrics[0]
    assert list(test.mean_ranks.values()) == pytest.approx(HOLDOUT_MEAN_RANKS["accuracy"])
    assert test.friedman.f_statistic == pytest.approx(6.7745, abs=5e-5)


def test_rank_rows_handles_every_ordering_of_three():
    for perm in permutations([0.1, 0.2, 0.3]):
        matrix = ResultsMatrix(
            values=[list(perm), list(perm)],
            dataset_labels=["a", "b"],
            classifier_labels=["x", "y", "z"],
        )
        ranks = rank_rows(matrix).ranks[0]
        assert ranks == [{0.1: 1.0, 0.2: 2.0, 0.3: 3.0}[v] for v in perm]
