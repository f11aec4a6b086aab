"""Worker-count control shared by training and the benchmark harness."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count():
    """Workers allowed by the ``SSE_THREADS`` environment variable (0 = auto)."""
    raw = os.environ.get("SSE_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError("SSE_THREADS must be an integer") from exc
    if n < 0:
        raise ValueError("SSE_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def ordered_map(fn, items):
    """Map preserving input order; threaded only when it can help.

    Jobs must be independent; collecting results in submission order keeps
    every caller deterministic regardless of scheduling.
    """
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
