"""Thread-pool mapping with deterministic result order."""

import logging
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """Apply ``fn`` to every item, returning results in item order.

    Args:
        fn: Pure function of one item.
        items: Work items.
        threads: Worker cap; 1 runs inline.

    Returns:
        List of results, index-aligned with ``items``.
    """
    work = list(items)
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    if threads == 1 or len(work) <= 1:
        return [fn(item) for item in work]

    logger.debug("Mapping %d items over %d threads", len(work), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, work))
