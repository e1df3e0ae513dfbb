"""Order-preserving map over scenarios."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, items, workers: int = 1) -> list:
    """``[fn(i) for i in items]``, spread over ``workers`` threads.

    Results come back in input order regardless of completion order, so any
    reduction over them is deterministic.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
