# Description: HTTP endpoints for the pure statistics and metric operations.

from http import HTTPStatus

from fastapi import APIRouter
from loguru import logger
from starlette.exceptions import HTTPException

from .evaluation import confusion, evaluate_predictions, metrics_from_cm
from .exceptions import IdsBenchError
from .models import (
    MeanRanksRequest,
    MetricSet,
    MetricsRequest,
    MetricTest,
    PosthocPolicy,
    RankMatrix,
    ResultsMatrix,
)
from .stats import compare_metric, rank_rows

idsbench_api_router = APIRouter()


def _bad_request(e: IdsBenchError) -> HTTPException:
    logger.warning(f"Rejected request: {e.detail}")
    return HTTPException(status_code=HTTPStatus.BAD_REQUEST, detail=e.detail)


#################################################
################ STATS ENDPOINTS ################
#################################################


@idsbench_api_router.post("/api/v1/stats/friedman")
async def api_friedman(data: ResultsMatrix) -> MetricTest:
    """Friedman test on a results matrix, with Nemenyi comparisons after a rejection"""
    try:
        return compare_metric(data.metric or "metric", rank_rows(data))
    except IdsBenchError as e:
        raise _bad_request(e)


@idsbench_api_router.post("/api/v1/stats/mean-ranks")
async def api_mean_ranks(data: MeanRanksRequest) -> MetricTest:
    """Friedman and Nemenyi from published mean ranks"""
    if data.d < 2 or len(data.mean_ranks) < 2:
        raise HTTPException(
            status_code=HTTPStatus.BAD_REQUEST,
            detail="need at least 2 datasets and 2 classifiers",
        )
    ranks = RankMatrix.from_mean_ranks(
        list(data.mean_ranks.values()), data.d, list(data.mean_ranks.keys())
    )
    try:
        return compare_metric("mean-ranks", ranks, data.alphas, PosthocPolicy.ALWAYS)
    except IdsBenchError as e:
        raise _bad_request(e)


###################################################
################ METRICS ENDPOINTS ################
###################################################


@idsbench_api_router.post("/api/v1/metrics")
async def api_metrics(data: MetricsRequest) -> MetricSet:
    """Confusion-matrix rates, plus AUC when scores are supplied"""
    try:
        if data.scores is not None:
            return evaluate_predictions(data.truth, data.preds, data.scores)
        return metrics_from_cm(confusion(data.preds, data.truth))
    except IdsBenchError as e:
        raise _bad_request(e)
