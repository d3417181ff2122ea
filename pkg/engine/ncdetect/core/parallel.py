"""Ordered thread-pool mapping shared by the numeric stages."""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


def ordered_map(func: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """
    Apply func to every item, returning results in input order.

    numpy releases the GIL inside its heavy kernels, so threads give real
    speedups for per-restart and per-class work. The result never depends
    on the number of threads.

    Args:
        func: Callable applied to each item
        items: Work items
        threads: Maximum worker count; 1 runs inline

    Returns:
        List of results aligned with items
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    workers = min(threads, len(items))
    logger.debug(f"Mapping {len(items)} items over {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
