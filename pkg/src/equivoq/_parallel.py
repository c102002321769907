import os
from concurrent.futures import ThreadPoolExecutor

ENV_VAR = "EQUIVOQ_THREADS"


def worker_count() -> int:
    """Concurrency cap from EQUIVOQ_THREADS (default 1, i.e. sequential)."""
    raw = os.environ.get(ENV_VAR, "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def ordered_map(fn, items):
    """map() whose results come back in input order whatever the scheduling."""
    items = list(items)
    n = worker_count()
    if n == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))
