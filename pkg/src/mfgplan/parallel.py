"""Deterministic parallel map over path chunks.

Workers write disjoint slices of preallocated arrays and all reductions run
on the assembled arrays afterwards, so results are bitwise identical for any
worker count. The default comes from the MFP_THREADS environment variable.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_default_threads = max(1, int(os.environ.get("MFP_THREADS", "1") or 1))


def set_default_threads(n: int) -> None:
    global _default_threads
    _default_threads = max(1, int(n))


def default_threads() -> int:
    return _default_threads


def chunked(n: int, fn, threads: int | None = None) -> None:
    """Call fn(lo, hi) over a partition of range(n), possibly in threads."""
    t = _default_threads if threads is None else max(1, int(threads))
    if t <= 1 or n < 2 * t:
        fn(0, n)
        return
    step = -(-n // t)
    bounds = [(lo, min(lo + step, n)) for lo in range(0, n, step)]
    with ThreadPoolExecutor(max_workers=t) as ex:
        list(ex.map(lambda b: fn(*b), bounds))
