"""Optional thread fan-out for independent node evaluations."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

T = TypeVar("T")
R = TypeVar("R")

WORKERS_ENV = "VOLTERRA_STEIN_WORKERS"


def worker_count(workers: Optional[int] = None) -> int:
    """Explicit value, else the environment variable, else 1."""
    if workers is not None:
        return max(1, int(workers))
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> List[R]:
    """Order-preserving map; LAPACK releases the GIL so threads help on multicore hosts."""
    items = list(items)
    nw = worker_count(workers)
    if nw == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=nw) as pool:
        return list(pool.map(fn, items))
