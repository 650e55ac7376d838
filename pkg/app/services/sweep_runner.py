"""
Sweep Runner

Runs independent sweep points (or optimizer restarts) with semaphore-based
throttling. Each task executes in a worker thread; results come back in
submission order regardless of completion order, so reductions over them
stay deterministic.
"""

import asyncio
import logging
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Optional, Sequence

logger = logging.getLogger(__name__)


@dataclass
class SweepStatus:
    """Current sweep statistics"""
    pending_count: int
    active_count: int
    completed_count: int
    failed_count: int


class SweepRunner:
    """
    Executes a batch of pure tasks with at most max_concurrent in flight

    Features:
    - Limits concurrent work using asyncio.Semaphore
    - Offloads each task to a thread (numpy releases the GIL in BLAS/LAPACK)
    - Collects results by index; the lowest-index failure is re-raised
    """

    def __init__(self, max_concurrent: int = 1, label: str = "sweep"):
        """
        Initialize sweep runner with a concurrency limit

        Args:
            max_concurrent: Maximum tasks executing at once
            label: Name used in log messages
        """
        if max_concurrent < 1:
            raise ValueError("max_concurrent must be at least 1")
        self.max_concurrent = max_concurrent
        self.label = label

        self.total_count = 0
        self.active_count = 0
        self.completed_count = 0
        self.failed_count = 0

    async def _execute_task(
        self, semaphore: asyncio.Semaphore, index: int, task: Callable[..., Any], item: Any
    ) -> tuple[int, Any, Optional[BaseException]]:
        async with semaphore:
            self.active_count += 1
            try:
                result = await asyncio.to_thread(task, item)
                self.completed_count += 1
                return index, result, None
            except Exception as e:
                logger.error(f"{self.label} task {index} failed: {e}")
                self.failed_count += 1
                return index, None, e
            finally:
                self.active_count -= 1

    async def run_async(self, task: Callable[..., Any], items: Sequence[Any]) -> list[Any]:
        semaphore = asyncio.Semaphore(self.max_concurrent)
        self.total_count = len(items)
        outcomes = await asyncio.gather(
            *(self._execute_task(semaphore, i, task, item) for i, item in enumerate(items))
        )
        outcomes = sorted(outcomes, key=lambda o: o[0])
        for index, _, error in outcomes:
            if error is not None:
                raise error
        logger.info(f"{self.label}: {self.completed_count}/{self.total_count} tasks completed")
        return [result for _, result, _ in outcomes]

    def run(self, task: Callable[..., Any], items: Iterable[Any]) -> list[Any]:
        """
        Apply task to every item and return results in item order

        Raises:
            Exception: The failure of the lowest-index failing task
        """
        items = list(items)
        self.completed_count = 0
        self.failed_count = 0
        if self.max_concurrent == 1:
            self.total_count = len(items)
            results = []
            for i, item in enumerate(items):
                try:
                    results.append(task(item))
                    self.completed_count += 1
                except Exception as e:
                    logger.error(f"{self.label} task {i} failed: {e}")
                    self.failed_count += 1
                    raise
            return results
        return asyncio.run(self.run_async(task, items))

    def get_status(self) -> SweepStatus:
        return SweepStatus(
            pending_count=self.total_count - self.completed_count - self.failed_count - self.active_count,
            active_count=self.active_count,
            completed_count=self.completed_count,
            failed_count=self.failed_count,
        )
