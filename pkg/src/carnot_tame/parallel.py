"""Chunked work with per-chunk RNG substreams.

Chunk ``c`` of a computation seeded with ``seed`` always draws from
``numpy.random.default_rng([seed, c])``, so results do not depend on how many
workers run the chunks. Results are gathered in chunk order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np


def resolve_threads(threads: int) -> int:
    if threads < 0:
        raise ValueError("threads must be >= 0")
    return threads or (os.cpu_count() or 1)


def chunk_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def chunk_sizes(total: int, chunk: int) -> list[int]:
    return [min(chunk, total - s) for s in range(0, total, chunk)]


def map_ordered(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """``[fn(item) for item in items]``, optionally on a thread pool."""
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
