"""Counter-based random streams.

Every draw is a pure function of (seed, tag, patient_id, index) through a
splitmix64-style finalizer, so any subset of patients or tables can be
generated independently, in any order, with identical results.  That is what
gives the generator its prefix property and byte determinism.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_PID_SALT = np.uint64(0xC2B2AE3D27D4EB4F)
_IDX_SALT = np.uint64(0x165667B19E3779F9)
_INV2_53 = float(2.0 ** -53)


def _mix64(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> np.uint64(30))
    x = x * _MIX1
    x = x ^ (x >> np.uint64(27))
    x = x * _MIX2
    return x ^ (x >> np.uint64(31))


@lru_cache(maxsize=None)
def _tag_u64(tag: str) -> np.uint64:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return np.uint64(int.from_bytes(digest[:8], "little"))


def _as_u64(value) -> np.ndarray:
    arr = np.asarray(value)
    return arr.astype(np.uint64, copy=False)


def hash64(seed: int, tag: str, pid, idx=0) -> np.ndarray:
    """64-bit hash of the draw coordinates; vectorized over pid and idx."""
    with np.errstate(over="ignore"):
        base = _mix64(np.uint64(seed) + _GOLDEN) + _tag_u64(tag)
        h = _mix64(base + _as_u64(pid) * _PID_SALT)
        h = _mix64(h + _as_u64(idx) * _IDX_SALT)
    return h


def uniform01(seed: int, tag: str, pid, idx=0) -> np.ndarray:
    """Uniform doubles in [0, 1) from the top 53 hash bits."""
    h = hash64(seed, tag, pid, idx)
    return (h >> np.uint64(11)).astype(np.float64) * _INV2_53


def randint(seed: int, tag: str, pid, idx, lo: int, hi: int) -> np.ndarray:
    """Uniform integers in the closed range [lo, hi]."""
    if hi < lo:
        raise ValueError("empty range")
    u = uniform01(seed, tag, pid, idx)
    return lo + np.minimum((u * (hi - lo + 1)).astype(np.int64), hi - lo)


def pick(seed: int, tag: str, pid, idx, pool: np.ndarray) -> np.ndarray:
    """Uniform draw from a pool array."""
    return pool[randint(seed, tag, pid, idx, 0, len(pool) - 1)]


@lru_cache(maxsize=64)
def _poisson_cdf(mean: float) -> np.ndarray:
    # enough terms that the tail mass is below 1e-12
    k_max = int(mean + 12 * (mean ** 0.5) + 25)
    k = np.arange(k_max + 1)
    log_pmf = k * np.log(mean) - mean - np.cumsum(np.log(np.maximum(k, 1)))
    cdf = np.cumsum(np.exp(log_pmf))
    return np.minimum(cdf, 1.0)


def poisson(seed: int, tag: str, pid, mean: float) -> np.ndarray:
    """Poisson counts via inverse transform over a precomputed cdf."""
    if mean <= 0:
        raise ValueError("mean must be positive")
    u = uniform01(seed, tag, pid, 0)
    cdf = _poisson_cdf(float(mean))
    return np.searchsorted(cdf, u, side="right").astype(np.int64)
