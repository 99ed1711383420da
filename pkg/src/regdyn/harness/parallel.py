"""Independent sweep points in worker processes, results in submission order.

Workers are started with the ``spawn`` method and single-threaded BLAS, so
every point is computed by identical code paths whatever the worker count.
"""
from __future__ import annotations

import contextlib
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # optional; BLAS thread count then follows the environment
    threadpool_limits = None

THREAD_ENV = "REGDYN_THREADS"
_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def resolve_threads(threads: int | None = None) -> int:
    """``--threads`` if given (nonzero), else ``REGDYN_THREADS``, else 1."""
    if threads:
        return int(threads)
    env = os.environ.get(THREAD_ENV, "")
    try:
        n = int(env)
    except ValueError:
        n = 0
    return n if n > 0 else 1


def _init_worker():
    for var in _BLAS_VARS:
        os.environ[var] = "1"


def map_points(fn, items: list, threads: int = 1) -> list:
    """``[fn(x) for x in items]``, in parallel when ``threads > 1``."""
    if threads <= 1 or len(items) <= 1:
        limit = threadpool_limits(1) if threadpool_limits is not None else contextlib.nullcontext()
        with limit:
            return [fn(x) for x in items]
    saved = {v: os.environ.get(v) for v in _BLAS_VARS}
    for var in _BLAS_VARS:
        os.environ[var] = "1"
    try:
        ctx = mp.get_context("spawn")
        with ProcessPoolExecutor(max_workers=min(threads, len(items)), mp_context=ctx,
                                 initializer=_init_worker) as ex:
            return list(ex.map(fn, items))
    finally:
        for var, val in saved.items():
            if val is None:
                os.environ.pop(var, None)
            else:
                os.environ[var] = val
