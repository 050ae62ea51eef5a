# retypelab/core/parallel.py - Bounded worker pool with deterministic result order
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = 1) -> List[R]:
    """
    Apply fn to every item, using at most ``threads`` workers.

    Results come back in input order whatever the completion order, so callers
    can reduce them deterministically.
    """
    items = list(items)
    workers = max(1, min(threads or 1, len(items)))
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
