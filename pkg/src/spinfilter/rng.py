"""Counter-based random streams and reproducible parallel reductions.

Every stochastic routine in the package draws from a Philox substream keyed
by (seed, labels...).  Substreams for distinct labels are statistically
independent and do not depend on execution order, so replica- or
chain-parallel code produces the same numbers for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_MASK64 = (1 << 64) - 1

WORKERS_ENV = "SPINFILTER_WORKERS"


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _fold(labels) -> int:
    """Hash a tuple of ints/strings into a single 64-bit word."""
    h = 0x6A09E667F3BCC909
    for lab in labels:
        if isinstance(lab, str):
            for b in lab.encode("utf-8"):
                h = _splitmix64(h ^ b)
        elif isinstance(lab, (int, np.integer)):
            h = _splitmix64(h ^ (int(lab) & _MASK64))
        else:
            raise TypeError(f"stream label must be int or str, got {type(lab)!r}")
    return h


def substream(seed: int, *labels) -> np.random.Generator:
    """Return a Generator for the (seed, labels...) stream.

    The same arguments always yield the same stream; different label tuples
    yield independent streams regardless of how many were created before.
    """
    key = np.array([int(seed) & _MASK64, _fold(labels)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def default_workers() -> int:
    """Worker count from the environment, default 1."""
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def tree_sum(values):
    """Sum a sequence by pairwise reduction.

    The reduction tree depends only on len(values), so the floating-point
    result is identical no matter how the values were produced in parallel.
    """
    items = list(values)
    if not items:
        raise ValueError("tree_sum of empty sequence")
    while len(items) > 1:
        nxt = []
        for i in range(0, len(items) - 1, 2):
            nxt.append(items[i] + items[i + 1])
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def parallel_map(fn, args_list, workers: int | None = None):
    """Map fn over args_list, preserving order.

    With workers > 1 the calls run on a thread pool; results are collected
    in submission order so the output is schedule-invariant.  Each call must
    obtain randomness only from substreams keyed by its own arguments.
    """
    if workers is None:
        workers = default_workers()
    if workers <= 1 or len(args_list) <= 1:
        return [fn(a) for a in args_list]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, a) for a in args_list]
        return [f.result() for f in futures]


def replica_blocks(n_total: int, block_size: int = 1024):
    """Fixed-size (start, count) blocks covering range(n_total).

    Block boundaries depend only on n_total and block_size, never on the
    worker count, so per-block substreams are stable.
    """
    blocks = []
    start = 0
    while start < n_total:
        count = min(block_size, n_total - start)
        blocks.append((start, count))
        start += count
    return blocks
