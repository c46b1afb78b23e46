"""Shared helpers: stable hashing, seeded RNG streams, bounded parallelism."""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

WORKERS_ENV_VAR = "NOISYLABELS_WORKERS"


def stable_hash(data: str, seed: int = 0) -> int:
    """64-bit hash of a string that is stable across processes and runs.

    Python's builtin hash() is salted per process, so anything that must be
    reproducible (feature hashing, per-text fallback labels) goes through here.
    """
    h = hashlib.blake2b(data.encode("utf-8"), digest_size=8,
                        key=seed.to_bytes(8, "little", signed=True))
    return int.from_bytes(h.digest(), "little")


def derive_rng(seed: int, *tags: str | int) -> np.random.Generator:
    """Independent named RNG stream derived from a base seed.

    Distinct tags give statistically independent streams, so e.g. batch
    shuffling and dropout can be reseeded separately without interfering.
    """
    entropy = [seed & 0xFFFFFFFFFFFFFFFF if seed >= 0 else seed + 2**64]
    for tag in tags:
        if isinstance(tag, str):
            entropy.append(stable_hash(tag))
        else:
            entropy.append(int(tag) % 2**64)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def worker_count() -> int:
    """Worker limit for concurrent runs, from NOISYLABELS_WORKERS (default 1)."""
    raw = os.environ.get(WORKERS_ENV_VAR, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def run_indexed(fn, items, workers: int | None = None) -> list:
    """Apply fn to each item, possibly in threads; results in input order.

    Each item must be self-contained (own seed, no shared mutable state) so
    the result is identical whatever the worker count.
    """
    items = list(items)
    if workers is None:
        workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
