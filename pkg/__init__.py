from fastapi import APIRouter
from loguru import logger

from .views_api import idsbench_api_router

logger.debug(
    "This logged message is from idsbench/__init__.py; run with --log-level DEBUG "
    "or IDSBENCH_LOG_LEVEL=DEBUG to see per-stage detail."
)


idsbench_ext: APIRouter = APIRouter(prefix="/idsbench", tags=["IDS Benchmark"])
idsbench_ext.include_router(idsbench_api_router)


__all__ = [
    "idsbench_ext",
]
