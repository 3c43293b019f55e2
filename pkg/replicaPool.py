import os
from concurrent.futures import Future
from concurrent.futures import ThreadPoolExecutor
from typing import Callable
from typing import Dict
from typing import Iterable
from typing import List
from typing import Optional
from typing import TypeVar
from logger import logger

T = TypeVar("T")

THREADS_ENV = "FSLLN_THREADS"


def thread_count() -> int:
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return os.cpu_count() or 1
    if not value.isdigit() or int(value) < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got '{value}'")
    return int(value)


class ReplicaPool:
    """
    Runs one callable per replica id. Replicas own disjoint random streams,
    so results only depend on the id and are handed back ordered by id.
    """

    def __init__(self, threads: Optional[int] = None):
        self._threads = threads if threads is not None else thread_count()

    @property
    def threads(self) -> int:
        return self._threads

    def map(self, fn: Callable[[int], T], replica_ids: Iterable[int]) -> List[T]:
        ids = sorted(set(replica_ids))
        if self._threads == 1 or len(ids) <= 1:
            return [fn(r) for r in ids]

        logger.debug(f"scheduling {len(ids)} replicas on {self._threads} threads")
        with ThreadPoolExecutor(max_workers=min(self._threads, len(ids))) as executor:
            futures: Dict[int, Future[T]] = {r: executor.submit(fn, r) for r in ids}
            return [futures[r].result() for r in ids]


def run_replicas(fn: Callable[[int], T], replica_ids: Iterable[int], pool: Optional[ReplicaPool] = None) -> List[T]:
    return (pool or ReplicaPool(1)).map(fn, replica_ids)
