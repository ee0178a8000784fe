"""Shared helpers: deterministic seeding and optional thread parallelism.

Parallel work is opt-in through the OWL_THREADS environment variable.
Results are always collected by task index, so the output order (and
therefore every downstream computation) is identical with and without
threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np


def thread_count() -> int:
    raw = os.environ.get("OWL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Map fn over items, threaded when OWL_THREADS > 1, order-preserving."""
    workers = min(thread_count(), len(items)) if items else 1
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def child_seeds(seed: int, n: int) -> list:
    """n reproducible child seeds derived from one root seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]
