"""Deterministic chunked execution over sample ranges."""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_CHUNK = 16384


def default_workers():
    return max(1, os.cpu_count() or 1)


def chunk_bounds(n, chunk=DEFAULT_CHUNK):
    edges = list(range(0, n, chunk)) + [n]
    return list(zip(edges[:-1], edges[1:])) if n > 0 else []


def map_chunks(fn, n, workers=1, chunk=DEFAULT_CHUNK):
    """Call ``fn(lo, hi)`` over fixed-size chunks of ``range(n)``, results in order.

    Per-sample random streams make each chunk's output independent of the
    others, so the worker count only changes wall-clock time.
    """
    bounds = chunk_bounds(n, chunk)
    if workers is None:
        workers = default_workers()
    if workers <= 1 or len(bounds) <= 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))


def concat(parts, attr):
    return np.concatenate([getattr(p, attr) for p in parts], axis=0)
