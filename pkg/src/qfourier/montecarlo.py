"""Reproducible chunked Monte Carlo.

Samples are produced in fixed-size chunks; chunk c of stream s is drawn from
a Philox generator seeded by SeedSequence([seed, s, c]).  Work is split by
chunk, so results are identical for any number of worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ArgumentError

CHUNK_SIZE = 4096

_threads = None


def default_threads():
    if _threads is not None:
        return _threads
    try:
        return max(1, int(os.environ.get("QFOURIER_THREADS", "1")))
    except ValueError:
        return 1


def set_default_threads(n):
    global _threads
    _threads = None if n is None else max(1, int(n))


def chunk_generator(seed, stream, chunk):
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(stream), int(chunk)])
    return np.random.Generator(np.random.Philox(ss))


def chunk_counts(n_samples, chunk_size=CHUNK_SIZE):
    if n_samples < 0:
        raise ArgumentError("sample count must be nonnegative")
    full, rest = divmod(int(n_samples), chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def map_chunks(fn, n_samples, seed, stream=0, threads=None, chunk_size=CHUNK_SIZE):
    """Call fn(rng, count) per chunk and return the results in chunk order."""
    counts = chunk_counts(n_samples, chunk_size)
    jobs = [(chunk_generator(seed, stream, c), k) for c, k in enumerate(counts)]
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(jobs) <= 1:
        return [fn(rng, k) for rng, k in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def sample_values(fn, n_samples, seed, stream=0, threads=None):
    """Concatenate per-chunk sample arrays (first axis is the sample axis)."""
    parts = map_chunks(fn, n_samples, seed, stream, threads)
    return np.concatenate(parts, axis=0) if parts else np.zeros(0)


def mean_and_se(values):
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    if n == 0:
        raise ArgumentError("no samples")
    mean = float(np.mean(v))
    se = float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return mean, se


def stream_id(*labels):
    """Stable integer stream label derived from strings or integers."""
    acc = 0
    for lab in labels:
        for ch in str(lab).encode():
            acc = (acc * 131 + ch) % (2**61 - 1)
        acc = (acc * 131 + 7) % (2**61 - 1)
    return acc
