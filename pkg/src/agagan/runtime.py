"""Thread-count control for the BLAS backend.

Deterministic mode pins BLAS to one thread so reductions happen in a fixed
order; with a fixed thread count results are reproducible run to run.
"""

from __future__ import annotations

import contextlib
import os

from threadpoolctl import threadpool_info, threadpool_limits

_limiter = None


def set_threads(threads: int | None = None, deterministic: bool = False) -> int | None:
    """Limit BLAS threads process-wide. Returns the applied limit (None = library default)."""
    global _limiter
    limit = 1 if deterministic else threads
    if limit is not None and limit < 1:
        raise ValueError(f"thread count must be >= 1, got {limit}")
    if limit is not None:
        _limiter = threadpool_limits(limits=limit)
    return limit


@contextlib.contextmanager
def single_threaded():
    with threadpool_limits(limits=1):
        yield


def describe() -> dict:
    pools = threadpool_info()
    return {
        "cpu_count": os.cpu_count(),
        "blas": [f"{p.get('internal_api')}:{p.get('num_threads')}" for p in pools],
    }
