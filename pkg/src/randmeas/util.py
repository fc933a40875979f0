"""Small shared helpers: deterministic chunked parallelism."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")

CHUNK = 64


def chunk_ranges(n: int, chunk: int = CHUNK) -> list[range]:
    return [range(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]


def parallel_chunks(work: Callable[[range], T], rows: range, threads: int = 1,
                    chunk: int = CHUNK) -> list[T]:
    """Apply ``work`` to fixed-size consecutive chunks of ``rows``.

    Chunk boundaries do not depend on the thread count and results come back
    in chunk order, so any order-deterministic reduction over the returned
    list is bit-identical for every value of ``threads``.
    """
    chunks = [range(rows.start + r.start, rows.start + r.stop)
              for r in chunk_ranges(len(rows), chunk)]
    if threads <= 1 or len(chunks) <= 1:
        return [work(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, chunks))
