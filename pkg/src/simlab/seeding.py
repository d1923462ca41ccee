"""Deterministic sub-seed derivation (splitmix64 mixing)."""

from __future__ import annotations

import zlib

import numpy as np

MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def splitmix64(x: int) -> int:
    z = (x + _GOLDEN) & MASK
    z = ((z ^ (z >> 30)) * _M1) & MASK
    z = ((z ^ (z >> 27)) * _M2) & MASK
    return z ^ (z >> 31)


def seed_derive(master_seed: int, index: int) -> int:
    """64-bit sub-seed for replica/block `index`; a bijection in index for fixed master."""
    return splitmix64((master_seed & MASK) ^ splitmix64(index & MASK))


def seed_derive_many(master_seed: int, indices) -> np.ndarray:
    """Vectorized seed_derive over an integer array (uint64 arithmetic wraps like the scalar version)."""
    with np.errstate(over="ignore"):
        def mix(z):
            z = z + np.uint64(_GOLDEN)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
            return z ^ (z >> np.uint64(31))

        idx = np.asarray(indices).astype(np.uint64)
        return mix(np.uint64(master_seed & MASK) ^ mix(idx))


def stream_seed(master_seed: int, label: str) -> int:
    """Sub-seed for a named random stream inside an experiment."""
    return seed_derive(master_seed, zlib.crc32(label.encode()))


def rng_for(master_seed: int, label: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed_derive(stream_seed(master_seed, label), index))
