import asyncio
from concurrent.futures import ProcessPoolExecutor
import logging
import multiprocessing
from typing import Any, Callable, Iterable, TypeVar


logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class ProcessPool:
    """Worker processes for independent solves, audits and sampling blocks.

    Uses the ``fork`` context so workers inherit the already imported numpy/scipy
    state instead of paying the import cost again.
    """

    def __init__(self, pool_size: int):
        self.pool_size = pool_size
        self.pool = ProcessPoolExecutor(max_workers=pool_size, mp_context=multiprocessing.get_context('fork'))
        self._semaphore: asyncio.Semaphore | None = None

    def map(self, func: Callable[[T], R], items: Iterable[T]) -> list[R]:
        """Run ``func`` over ``items``; results come back in input order."""
        return list(self.pool.map(func, items))

    async def run_function(self, func: Callable[..., Any], *args: Any) -> Any:
        # Created lazily: the semaphore must belong to the running loop
        if self._semaphore is None:
            self._semaphore = asyncio.Semaphore(self.pool_size)
        async with self._semaphore:
            loop = asyncio.get_running_loop()
            return await loop.run_in_executor(self.pool, func, *args)

    def shutdown(self) -> None:
        self.pool.shutdown(wait=True)


EXECUTOR: ProcessPool | None = None


def init_process_pool(pool_size: int) -> ProcessPool:
    global EXECUTOR
    if EXECUTOR is None or EXECUTOR.pool_size != pool_size:
        EXECUTOR = ProcessPool(pool_size)
    return EXECUTOR


def parallel_map(func: Callable[[T], R], items: Iterable[T], jobs: int = 1) -> list[R]:
    """Map in-process for ``jobs <= 1``, otherwise through the shared pool.

    ``func`` must be a module level function so it can be sent to the workers.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    logger.debug(f"Running {len(items)} {func.__name__} jobs on {jobs} workers")
    return init_process_pool(jobs).map(func, items)
