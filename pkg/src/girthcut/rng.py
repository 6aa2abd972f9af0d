"""Counter-based randomness for the simulator.

Every random decision in a simulation run is a pure function of
``(seed, vertex, round, stream)``, hashed through two rounds of the
splitmix64 finalizer.  This makes runs reproducible bit-for-bit regardless
of vertex iteration order and lets the event-driven fast path and the naive
per-round path draw from disjoint streams of the same root seed.

Stream assignments: 0 per-round recoloring decisions (and the seeding
round), 1/2 event firing time and color, 4/5 the same pair for resamples
forced by a segment boundary.  The scalar and vectorized implementations
produce identical values; the test suite asserts this.
"""

from __future__ import annotations

import numpy as np

__all__ = ["mix64", "decision_u64", "decision_uniform",
           "decision_u64_array", "decision_uniform_array", "derive_seed"]

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_P1 = 0xBF58476D1CE4E5B9
_P2 = 0x94D049BB133111EB
_STREAM = 0xD6E8FEB86659FD93

_TO_UNIT = 2.0 ** -53


def mix64(x: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    x &= _M64
    x ^= x >> 30
    x = (x * _P1) & _M64
    x ^= x >> 27
    x = (x * _P2) & _M64
    return x ^ (x >> 31)


def decision_u64(seed: int, vertex: int, rnd: int, stream: int) -> int:
    h = mix64((seed + stream * _STREAM + _GOLDEN) & _M64)
    h = mix64(h ^ ((vertex + 1) * _P1 & _M64))
    return mix64(h ^ ((rnd + 1) * _P2 & _M64))


def decision_uniform(seed: int, vertex: int, rnd: int, stream: int) -> float:
    """Uniform in [0, 1) with 53 random bits."""
    return (decision_u64(seed, vertex, rnd, stream) >> 11) * _TO_UNIT


def _mix64_np(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= np.uint64(_P1)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_P2)
    return x ^ (x >> np.uint64(31))


def decision_u64_array(seed: int, vertices: np.ndarray, rnd: int,
                       stream: int) -> np.ndarray:
    h0 = mix64((seed + stream * _STREAM + _GOLDEN) & _M64)
    v = vertices.astype(np.uint64, copy=False)
    h = _mix64_np(np.uint64(h0) ^ ((v + np.uint64(1)) * np.uint64(_P1)))
    return _mix64_np(h ^ np.uint64((rnd + 1) * _P2 & _M64))


def decision_uniform_array(seed: int, vertices: np.ndarray, rnd: int,
                           stream: int) -> np.ndarray:
    return (decision_u64_array(seed, vertices, rnd, stream)
            >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def derive_seed(root_seed: int, index: int) -> int:
    """Independent per-sample seed from a root seed."""
    return mix64(mix64((root_seed + _GOLDEN) & _M64) ^ ((index + 1) * _P1 & _M64))
