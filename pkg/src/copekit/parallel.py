"""Deterministic thread helpers.

Work is split into contiguous chunks, one per worker; every item is computed
by the same expression on the same inputs, so results are bit-identical for
any thread count. Thread count 1 short-circuits the executor entirely.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "COPEKIT_THREADS"


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def chunk_bounds(n_items: int, n_chunks: int):
    """Split range(n_items) into at most n_chunks contiguous (start, stop) spans."""
    n_chunks = max(1, min(n_chunks, n_items)) if n_items else 0
    bounds = []
    base, extra = divmod(n_items, n_chunks) if n_chunks else (0, 0)
    start = 0
    for k in range(n_chunks):
        stop = start + base + (1 if k < extra else 0)
        bounds.append((start, stop))
        start = stop
    return bounds


def map_chunked(fn, items, threads: int = 1):
    """Apply fn to each item, fanning chunks out to threads; order preserved."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    bounds = chunk_bounds(len(items), threads)

    def run_chunk(span):
        start, stop = span
        return [fn(items[i]) for i in range(start, stop)]

    with ThreadPoolExecutor(max_workers=len(bounds)) as pool:
        chunks = list(pool.map(run_chunk, bounds))
    return [result for chunk in chunks for result in chunk]
