import os
from concurrent.futures import ThreadPoolExecutor

JOBS_ENV = "ESCAPETIME_JOBS"


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def parallel_map(fn, items, jobs=None):
    """Ordered map; threads only when ``jobs > 1``. Results never depend on ``jobs``."""
    items = list(items)
    jobs = default_jobs() if jobs is None else jobs
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))
