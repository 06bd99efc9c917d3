"""Order-preserving parallel map over sweep points.

Workers receive whole sweep points and return whole rows; accumulation
inside a point is already deterministic (fixed chunk order), and results
are reassembled in argument order, so the output bytes cannot depend on
the worker count.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

A = TypeVar("A")
R = TypeVar("R")


def parallel_map(fn: Callable[[A], R], args: Sequence[A], threads: int = 1) -> list[R]:
    if threads <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=min(threads, len(args))) as pool:
        return list(pool.map(fn, args))
