"""Shared plumbing: deterministic thread fan-out for Monte Carlo batches."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def thread_count() -> int:
    """Worker count: the KP_THREADS env var, else capped cpu count."""
    env = os.environ.get("KP_THREADS", "").strip()
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("KP_THREADS must be a positive integer")
        return n
    return min(8, os.cpu_count() or 1)


def thread_map(func: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """``[func(x) for x in items]``, fanned out over a thread pool.

    Results come back in input order no matter how the pool schedules
    them, so reductions downstream are deterministic for a fixed seed.
    The hot kernels release the GIL, which is what makes threads (rather
    than processes) worthwhile here.
    """
    work: Sequence[T] = list(items)
    workers = min(thread_count(), len(work)) if work else 1
    if workers <= 1:
        return [func(x) for x in work]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, work))
