"""
Worker pool for independent evaluations.

Probe evolutions, drift trials and oracle pairs are independent; they are
mapped over a thread pool capped by GF_THREADS or --threads.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

import config

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class WorkerPool:
    """Caps the number of threads used by the independent-task helpers."""

    def __init__(self):
        self.max_workers = config.THREADS

    def configure(self, threads: int) -> None:
        if threads < 1:
            raise ValueError(f"threads must be >= 1, got {threads}")
        self.max_workers = threads
        logger.debug(f"Worker pool capped at {threads} threads")

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """Ordered results of fn over items; runs inline when capped at one thread."""
        items = list(items)
        if self.max_workers == 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=min(self.max_workers, len(items))) as executor:
            return list(executor.map(fn, items))


# Global worker pool instance
worker_pool = WorkerPool()
