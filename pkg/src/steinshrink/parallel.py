"""Counter-based random streams and deterministic replicate-parallel reductions.

Replicates are cut into fixed-size blocks. Block ``b`` of stream ``s`` under
seed ``seed`` always draws from ``Philox(key=(seed, s), counter=b << 128)``,
so the numbers a replicate sees depend only on ``(seed, stream, index)`` and
never on how blocks are scheduled across threads. Sums are taken with
``math.fsum``, which is correctly rounded and therefore order independent.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

BLOCK_SIZE = 8192
_U64 = (1 << 64) - 1

T = TypeVar("T")


def check_seed(seed: int) -> int:
    seed = int(seed)
    if seed < 0 or seed > _U64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def block_generator(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    """Generator for one block of one stream; independent of every other (block, stream)."""
    key = check_seed(seed) | (int(stream) << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=int(block) << 128))


def block_ranges(n: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int, int]]:
    """(block index, start, stop) triples covering ``range(n)``."""
    return [(b, start, min(start + block_size, n))
            for b, start in enumerate(range(0, n, block_size))]


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("STEINSHRINK_THREADS", 0)) or os.cpu_count() or 1
    return max(1, int(threads))


def map_ordered(fn: Callable[[T], object], items: Sequence[T], threads: int | None = None) -> list:
    """Apply ``fn`` to ``items``, possibly in parallel, returning results in input order."""
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def stable_mean_se(values: np.ndarray) -> tuple[float, float]:
    """Mean and standard error (sample std / sqrt(n)) with order-independent sums."""
    values = np.asarray(values, dtype=float).ravel()
    n = values.size
    if n == 0:
        raise ValueError("cannot average an empty array")
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)
