"""Order-preserving process pool map used by the ensemble routines."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from itertools import starmap


def resolve_jobs(jobs) -> int:
    if jobs in (None, "auto", 0):
        return os.cpu_count() or 1
    jobs = int(jobs)
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1 or 'auto', got {jobs}")
    return jobs


def parallel_map(fn, items, jobs=1, star: bool = False) -> list:
    """``[fn(x) for x in items]`` computed on ``jobs`` processes.

    Results come back in input order regardless of scheduling, so callers
    that reduce in list order are deterministic.
    """
    items = list(items)
    jobs = min(resolve_jobs(jobs), max(len(items), 1))
    if jobs == 1:
        return list(starmap(fn, items)) if star else [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        if star:
            return list(ex.map(fn, *zip(*items)))
        return list(ex.map(fn, items))
