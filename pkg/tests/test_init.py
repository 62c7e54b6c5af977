import pytest
from fastapi import APIRouter
from starlette.exceptions import HTTPException

from .. import idsbench_ext
from ..models import MeanRanksRequest, MetricsRequest, ResultsMatrix
from ..views_api import api_friedman, api_mean_ranks, api_metrics


# just import router and add it to a test router
@pytest.mark.asyncio
async def test_router():
    router = APIRouter()
    router.include_router(idsbench_ext)
    paths = {route.path for route in router.routes}
    assert "/idsbench/api/v1/stats/friedman" in paths


@pytest.mark.asyncio
async def test_api_mean_ranks():
    request = MeanRanksRequest(
        mean_ranks={"RF": 3.75, "CART": 1.5, "MLP": 3.0, "AB": 2.875, "XGB": 6.0, "GBM": 5.875, "ETC": 5.0},
        d=4,
    )
    result = await api_mean_ranks(request)
    assert result.friedman.f_statistic == pytest.approx(4.7020, abs=5e-5)
    assert result.nemenyi is not None
    assert len(result.nemenyi.pairs) == 21


@pytest.mark.asyncio
async def test_api_mean_ranks_needs_two_datasets():
    with pytest.raises(HTTPException) as e:
        await api_mean_ranks(MeanRanksRequest(mean_ranks={"RF": 1.0, "CART": 2.0}, d=1))
    assert e.value.status_code == 400


@pytest.mark.asyncio
async def test_api_friedman_rejects_unanimous_rankings():
    matrix = ResultsMatrix(
        values=[[0.9, 0.8], [0.95, 0.7]],
        dataset_labels=["a", "b"],
        classifier_labels=["RF", "CART"],
        metric="accuracy",
    )
    with pytest.raises(HTTPException) as e:
        await api_friedman(matrix)
    assert e.value.status_code == 400


@pytest.mark.asyncio
async def test_api_metrics():
    rates = await api_metrics(MetricsRequest(preds=[1, 0, 1, 0], truth=[1, 1, 0, 0]))
    assert rates.accuracy == 0.5
    assert rates.auc is None
    scored = await api_metrics(
        MetricsRequest(preds=[0, 0, 1, 1], truth=[0, 0, 1, 1], scores=[0.1, 0.4, 0.35, 0.8])
    )
    assert scored.accuracy == 1.0
    assert scored.auc == pytest.approx(0.75)


@pytest.mark.asyncio
async def test_api_metrics_length_mismatch():
    with pytest.raises(HTTPException) as e:
        await api_metrics(MetricsRequest(preds=[1, 0], truth=[1]))
    assert e.value.status_code == 400
