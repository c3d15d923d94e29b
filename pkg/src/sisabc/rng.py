"""Deterministic random streams derived from a master seed.

Every unit of parallel work (a block of prior draws, an MCMC chain, a block
of forecast replicates) gets its own ``numpy.random.Generator`` keyed by
``(master_seed, task...)``.  Results therefore depend only on the master seed
and the fixed task decomposition, never on how many workers ran the tasks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

# Fixed work-block size for embarrassingly parallel loops.
BLOCK_SIZE = 1000

# Namespaces keep streams for different purposes disjoint under one seed.
STREAM_REJECTION = 1
STREAM_MCMC = 2
STREAM_FORECAST = 3
STREAM_SIMULATE = 4
STREAM_PILOT = 5
STREAM_VALIDATE = 6


def derive_rng(master_seed: int, *task: int) -> np.random.Generator:
    if master_seed is None:
        raise ValueError("a master seed is required")
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(t) for t in task))
    return np.random.Generator(np.random.PCG64(ss))


def blocks(n: int, size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    """Split ``range(n)`` into fixed ``(start, stop)`` blocks."""
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def run_tasks(fn: Callable[[T], R], tasks: Sequence[T], workers: int = 1) -> list[R]:
    """Map ``fn`` over ``tasks`` preserving order.

    The simulation kernels release the GIL, so a thread pool gives real
    parallelism without pickling networks across processes.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def as_generator(rng: "np.random.Generator | int | None") -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def kernel_state(rng) -> np.ndarray:
    """Seed a 4-word xoshiro256+ state for the compiled kernels from ``rng``.

    Consumes four draws from ``rng`` so successive calls get fresh streams.
    """
    if rng is None:
        raise ValueError("an explicit random stream (Generator or seed) is required")
    st = as_generator(rng).integers(0, 2**64, size=4, dtype=np.uint64)
    if not st.any():
        st[0] = 1
    return st
