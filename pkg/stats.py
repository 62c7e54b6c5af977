# Description: Friedman omnibus test and Nemenyi post-hoc comparison over a
# datasets x classifiers results matrix.

import math
from itertools import combinations
from typing import Optional

import numpy as np
from loguru import logger
from scipy.stats import f as f_dist
from scipy.stats import norm, rankdata

from .exceptions import DegenerateStatistic
from .models import (
    Decision,
    FriedmanResult,
    MetricTest,
    NemenyiPair,
    NemenyiResult,
    PosthocPolicy,
    RankMatrix,
    ResultsMatrix,
    TestReport,
)

DEFAULT_ALPHAS = [0.05, 0.1]


def alpha_key(alpha: float) -> str:
    return f"{alpha:g}"


def decide(p_value: float, alphas: list[float] = DEFAULT_ALPHAS) -> dict[str, Decision]:
    """Reject iff p < alpha."""
    return {
        alpha_key(a): Decision.REJECT if p_value < a else Decision.ACCEPT for a in alphas
    }


def rank_rows(results: ResultsMatrix) -> RankMatrix:
    """Rank each dataset row by raw value, ascending; ties share the average.

    The largest value receives rank k, so the best classifier holds rank k on
    HIGHER_BETTER metrics and rank 1 on LOWER_BETTER ones (FPR ranks are the
    complement k + 1 - r of the specificity ranks).
    """
    values = np.asarray(results.values, dtype=np.float64)
    ranks = np.vstack([rankdata(row, method="average") for row in values])
    sums = ranks.sum(axis=0)
    return RankMatrix(
        ranks=ranks.tolist(),
        rank_sums=sums.tolist(),
        mean_ranks=(sums / results.d).tolist(),
        d=results.d,
        k=results.k,
        classifier_labels=results.classifier_labels,
    )


def friedman(ranks: RankMatrix, alphas: list[float] = DEFAULT_ALPHAS) -> FriedmanResult:
    d, k = ranks.d, ranks.k
    sums = np.asarray(ranks.rank_sums, dtype=np.float64)
    q = 12.0 / (d * k * (k + 1)) * float(np.sum((sums - d * (k + 1) / 2.0) ** 2))
    bound = d * (k - 1)
    if math.isclose(q, bound, rel_tol=0.0, abs_tol=1e-12):
        raise DegenerateStatistic(q, bound)
    df1, df2 = k - 1, (d - 1) * (k - 1)
    f_statistic = (d - 1) * q / (bound - q)
    p_value = float(f_dist.sf(f_statistic, df1, df2))
    return FriedmanResult(
        q=q,
        f_statistic=f_statistic,
        df1=df1,
        df2=df2,
        p_value=min(max(p_value, 0.0), 1.0),
        decisions=decide(p_value, alphas),
    )


def friedman_from_mean_ranks(
    mean_ranks: list[float], d: int, alphas: list[float] = DEFAULT_ALPHAS
) -> FriedmanResult:
    return friedman(RankMatrix.from_mean_ranks(mean_ranks, d), alphas)


def nemenyi_scale(k: int, d: int) -> float:
    return math.sqrt(k * (k + 1) / (6.0 * d))


def nemenyi(
    mean_ranks: list[float],
    d: int,
    k: Optional[int] = None,
    labels: Optional[list[str]] = None,
    alphas: list[float] = DEFAULT_ALPHAS,
) -> NemenyiResult:
    """All pairwise comparisons with a Bonferroni-adjusted two-sided normal tail.

    Pairs are listed by decreasing statistic, ties in classifier order.
    """
    k = k or len(mean_ranks)
    labels = labels or [f"C{j + 1}" for j in range(k)]
    scale = nemenyi_scale(k, d)
    n_pairs = k * (k - 1) // 2
    pairs = []
    for i, j in combinations(range(k), 2):
        gamma = abs(mean_ranks[i] - mean_ranks[j]) / scale
        p_adjusted = min(1.0, n_pairs * 2.0 * float(norm.sf(gamma)))
        pairs.append(
            NemenyiPair(
                x=labels[i],
                y=labels[j],
                gamma=gamma,
                p_adjusted=p_adjusted,
                decisions=decide(p_adjusted, alphas),
            )
        )
    pairs.sort(key=lambda pair: -pair.gamma)
    return NemenyiResult(
        pairs=pairs,
        critical_differences={alpha_key(a): critical_difference(k, d, a) for a in alphas},
    )


def critical_difference(k: int, d: int, alpha: float) -> float:
    """Smallest mean-rank gap the adjusted comparison rejects at `alpha`."""
    n_pairs = k * (k - 1) // 2
    return float(norm.isf(alpha / (2.0 * n_pairs))) * nemenyi_scale(k, d)


def compare_metric(
    metric: str,
    ranks: RankMatrix,
    alphas: list[float] = DEFAULT_ALPHAS,
    posthoc: PosthocPolicy = PosthocPolicy.REJECTED,
) -> MetricTest:
    result = friedman(ranks, alphas)
    run_posthoc = posthoc == PosthocPolicy.ALWAYS or result.p_value < max(alphas)
    pairwise = None
    if run_posthoc:
        pairwise = nemenyi(ranks.mean_ranks, ranks.d, ranks.k, ranks.classifier_labels, alphas)
    logger.info(
        f"{metric}: F={result.f_statistic:.4f} p={result.p_value:.4f} "
        f"({'post-hoc' if pairwise else 'no post-hoc'})"
    )
    return MetricTest(
        metric=metric,
        mean_ranks=dict(zip(ranks.classifier_labels, ranks.mean_ranks)),
        friedman=result,
        nemenyi=pairwise,
    )


def build_test_report(
    rank_matrices: dict[str, RankMatrix],
    alphas: list[float] = DEFAULT_ALPHAS,
    posthoc: PosthocPolicy = PosthocPolicy.REJECTED,
) -> TestReport:
    """Friedman (and, per policy, Nemenyi) for every metric; all matrices share d and k.

    A metric whose rankings agree on every dataset has no F statistic and is left
    out of the report.
    """
    first = next(iter(rank_matrices.values()))
    tests = []
    for metric, ranks in rank_matrices.items():
        try:
            tests.append(compare_metric(metric, ranks, alphas, posthoc))
        except DegenerateStatistic as e:
            logger.warning(f"{metric}: {e.detail}, skipped")
    return TestReport(d=first.d, k=first.k, alphas=alphas, metrics=tests)


def report_from_results(
    matrices: dict[str, ResultsMatrix],
    alphas: list[float] = DEFAULT_ALPHAS,
    posthoc: PosthocPolicy = PosthocPolicy.REJECTED,
) -> TestReport:
    return build_test_report({m: rank_rows(r) for m, r in matrices.items()}, alphas, posthoc)


def report_from_mean_ranks(
    table: dict[str, dict[str, float]],
    d: int,
    alphas: list[float] = DEFAULT_ALPHAS,
    posthoc: PosthocPolicy = PosthocPolicy.REJECTED,
) -> TestReport:
    """`table` maps metric -> classifier -> published mean rank."""
    ranks = {
        metric: RankMatrix.from_mean_ranks(list(row.values()), d, list(row.keys()))
        for metric, row in table.items()
    }
    return build_test_report(ranks, alphas, posthoc)
