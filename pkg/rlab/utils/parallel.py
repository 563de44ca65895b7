import os
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from rlab.utils import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

_default_threads = settings.DEFAULT_THREADS


def set_default_threads(threads: int) -> None:
    """Set the worker count used when callers pass threads=None (0 = auto)."""
    global _default_threads
    _default_threads = max(int(threads), 0)


def resolve_threads(threads: Optional[int] = None) -> int:
    count = _default_threads if threads is None else int(threads)
    if count <= 0:
        count = os.cpu_count() or 1
    return count


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """Order-preserving map over a thread pool; runs inline for a single worker."""
    items = list(items)
    workers = min(resolve_threads(threads), max(len(items), 1))
    if workers == 1:
        return [fn(item) for item in items]
    logger.debug(f"parallel_map: {len(items)} items on {workers} workers")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def chunked(count: int, size: int) -> List[slice]:
    """Contiguous slices covering range(count)."""
    size = max(int(size), 1)
    return [slice(start, min(start + size, count)) for start in range(0, count, size)]
