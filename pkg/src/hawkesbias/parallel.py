"""Ordered map over a process pool, sequential when one worker is requested."""

import os
from concurrent.futures import ProcessPoolExecutor


def default_jobs():
    return os.cpu_count() or 1


def pmap(func, items, jobs=1):
    """``list(map(func, items))``, spread over ``jobs`` processes; result order follows ``items``."""
    items = list(items)
    if jobs is None:
        jobs = default_jobs()
    if jobs <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(func, items))
