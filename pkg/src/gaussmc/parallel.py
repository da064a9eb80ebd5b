"""Fixed-chunk parallel map used by the E-step, M-step and evaluation.

Chunk boundaries depend only on the number of items, never on the worker
count, and results come back in chunk order; reductions over them are
therefore bit-identical for any degree of parallelism.
"""
import os
from concurrent.futures import ThreadPoolExecutor

from .errors import ValidationError

CHUNK_ROWS = 256


def resolve_workers(workers):
    if workers is None:
        return os.cpu_count() or 1
    if int(workers) != workers or workers < 1:
        raise ValidationError(f"workers must be a positive integer, got {workers}")
    return int(workers)


def chunks(n, size=CHUNK_ROWS):
    return [slice(lo, min(lo + size, n)) for lo in range(0, n, size)]


def chunked_map(fn, n, workers=1):
    """``[fn(c) for c in chunks(n)]``, evaluated on up to ``workers`` threads."""
    parts = chunks(n)
    workers = resolve_workers(workers)
    if workers == 1 or len(parts) <= 1:
        return [fn(c) for c in parts]
    with ThreadPoolExecutor(max_workers=min(workers, len(parts))) as pool:
        return list(pool.map(fn, parts))
