"""Small shared helpers."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    """Worker override from the environment; defaults to serial."""
    value = os.environ.get("VFLOCK_WORKERS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def parallel_map(fn, items, workers: int | None = None) -> list:
    """Map preserving order; results are independent of scheduling because
    every item carries its own pre-split random stream."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
