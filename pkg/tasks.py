# Description: Worker pool for benchmark cells. A cell is one
# (dataset, classifier, repeat) unit of work; results stream back in
# submission order so they can be written as soon as they are ready.

from typing import Any, Callable, Iterable, Iterator

from joblib import Parallel, delayed
from loguru import logger


def run_cells(
    fn: Callable[..., Any], cells: Iterable[tuple], workers: int = 1
) -> Iterator[Any]:
    """Apply fn(*cell) to every cell with up to `workers` processes."""
    cells = list(cells)
    if not cells:
        return iter(())
    if workers <= 1:
        logger.debug(f"Running {len(cells)} cells in-process")
        return (fn(*cell) for cell in cells)
    logger.debug(f"Running {len(cells)} cells on {workers} workers")
    return Parallel(n_jobs=workers, return_as="generator")(
        delayed(fn)(*cell) for cell in cells
    )
