"""Fan independent jobs over a process pool, gathering results in key order."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Hashable, Iterable, TypeVar

T = TypeVar("T")

THREADS_ENV = "CAULK_THREADS"


def worker_count() -> int:
    """``CAULK_THREADS`` if set and positive, else the number of usable cores."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            n = 0
        if n > 0:
            return n
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # not on Linux
        return max(1, os.cpu_count() or 1)


def run_cells(fn: Callable[..., T], cells: Iterable[tuple[Hashable, tuple]], workers: int | None = None) -> list[tuple[Hashable, T]]:
    """Evaluate ``fn(*args)`` for each ``(key, args)`` cell.

    Results come back sorted by key, so the output never depends on which
    worker finished first. One worker means plain in-process evaluation.
    """
    cells = list(cells)
    workers = worker_count() if workers is None else max(1, workers)
    if workers == 1 or len(cells) <= 1:
        results = [(key, fn(*args)) for key, args in cells]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(cells))) as pool:
            futures = [(key, pool.submit(fn, *args)) for key, args in cells]
            results = [(key, fut.result()) for key, fut in futures]
    return sorted(results, key=lambda kv: _sort_key(kv[0]))


def _sort_key(key):
    # keys mix ints, floats and strings; compare by type name first
    if isinstance(key, tuple):
        return tuple(_sort_key(k) for k in key)
    if isinstance(key, (int, float)):
        return (0, key, "")
    return (1, 0, str(key))
