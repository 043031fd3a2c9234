"""Order-preserving parallel map used for path-level Monte Carlo."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def chunk_ranges(n: int, n_chunks: int) -> list[range]:
    """Split ``range(n)`` into at most ``n_chunks`` contiguous blocks."""
    n_chunks = max(1, min(n_chunks, n)) if n else 1
    bounds = [round(i * n / n_chunks) for i in range(n_chunks + 1)]
    return [range(bounds[i], bounds[i + 1]) for i in range(n_chunks)]


def ordered_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> list[R]:
    """Apply ``fn`` to every item and return results in input order.

    Results are identical for any ``threads`` value as long as ``fn`` is
    pure given its argument; callers derive RNG streams from the item.
    """
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
