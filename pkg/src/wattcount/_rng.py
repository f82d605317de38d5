"""Deterministic randomness helpers.

Two kinds of randomness are used in this package and they have different
reproducibility contracts:

* counter-based draws, where the value for frame index i must be a pure
  function of (seed, stream tag, i) so that evaluating any subset of frames
  in any order gives the same numbers as a full sequential pass;
* ordinary bulk draws (trace synthesis, Monte Carlo, training noise), where
  a seeded generator consumed in a fixed documented order is enough.

The counter-based path hashes 64-bit keys with splitmix64 and converts the
hash to floats, so it is vectorizable and order independent.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np
from scipy.special import ndtri

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_STREAM_SALT = np.uint64(0xD6E8FEB86659FD93)
_INDEX_SALT = np.uint64(0xA5CB3E2F71A8D209)


def _mix(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps, which is intended
    with np.errstate(over="ignore"):
        x = (x + _GOLDEN) & _MASK
        x = ((x ^ (x >> np.uint64(30))) * _MIX1) & _MASK
        x = ((x ^ (x >> np.uint64(27))) * _MIX2) & _MASK
        return x ^ (x >> np.uint64(31))


def _as_u64(value: int) -> np.uint64:
    return np.uint64(int(value) & 0xFFFFFFFFFFFFFFFF)


def keyed_uniforms(seed: int, stream: int, indices) -> np.ndarray:
    """Uniform (0, 1) draws keyed by (seed, stream, index), order independent."""
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix(np.asarray(_as_u64(seed) + _as_u64(stream) * _STREAM_SALT))
        h = _mix(base ^ ((idx * _INDEX_SALT) & _MASK))
    # 53 significant bits, shifted into (0, 1) so inverse-CDF transforms stay finite
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0 ** -53)


def keyed_normals(seed: int, stream: int, indices, mean: float = 0.0, std: float = 0.0) -> np.ndarray:
    """Normal draws keyed like :func:`keyed_uniforms`, via the inverse CDF."""
    if std == 0.0:
        return np.full(np.asarray(indices).shape, mean, dtype=np.float64)
    return mean + std * ndtri(keyed_uniforms(seed, stream, indices))


def spawn_rng(seed: int, *tags: int) -> np.random.Generator:
    """A generator for bulk draws, derived hierarchically from seed and tags."""
    key: Iterable[int] = tuple(int(t) & 0xFFFFFFFFFFFFFFFF for t in tags)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=key))


def derive_seed(seed: int, *tags: int) -> int:
    """A new 64-bit seed that is a pure function of (seed, tags)."""
    h = _as_u64(seed)
    with np.errstate(over="ignore"):
        for t in tags:
            h = _mix(np.asarray(h ^ (_as_u64(t) * _INDEX_SALT)))
    return int(h)
