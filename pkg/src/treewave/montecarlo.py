"""Chunked Monte Carlo with per-chunk seed derivation.

Trials are cut into fixed-size chunks; chunk ``i`` always draws from
``SeedSequence(seed, spawn_key=(i,))``. Worker count only decides which
thread runs a chunk, so results do not depend on it.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_CHUNK = 100_000


def chunk_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def chunk_sizes(trials: int, chunk: int = DEFAULT_CHUNK) -> list:
    if trials < 0:
        raise ValueError("trials must be nonnegative")
    full, rest = divmod(trials, chunk)
    return [chunk] * full + ([rest] if rest else [])


def run_chunked(task, trials: int, seed: int, workers: int = 1, chunk: int = DEFAULT_CHUNK) -> list:
    """Call ``task(n, rng)`` once per chunk and return results in chunk order."""
    sizes = chunk_sizes(trials, chunk)
    jobs = [(n, chunk_rng(seed, i)) for i, n in enumerate(sizes)]
    if workers <= 1 or len(jobs) <= 1:
        return [task(n, rng) for n, rng in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: task(*job), jobs))
