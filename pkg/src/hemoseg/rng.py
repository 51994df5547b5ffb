"""Counter-based deterministic random fields.

Every variate is a pure function of (seed, stream, counter), so fields can
be evaluated for any subset of voxels in any order and still agree with a
whole-volume evaluation. The generator is a splitmix64-style avalanche of
the 64-bit counter; normals come from Box-Muller over two derived uniforms.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_U53 = float(2.0 ** -53)


def _mix(x) -> np.ndarray:
    # keep everything >= 1-d: uint64 array ops wrap silently, scalars warn
    x = np.atleast_1d(np.asarray(x, dtype=np.uint64)) + _GAMMA
    x ^= x >> np.uint64(30)
    x *= _M1
    x ^= x >> np.uint64(27)
    x *= _M2
    x ^= x >> np.uint64(31)
    return x


def _hash(seed: int, stream: int, counters: np.ndarray) -> np.ndarray:
    c = np.asarray(counters, dtype=np.uint64)
    h = _mix(_mix(seed & 0xFFFFFFFFFFFFFFFF) ^ _mix(stream & 0xFFFFFFFFFFFFFFFF))
    return _mix(c ^ h)


def uniform_field(seed: int, stream: int, counters) -> np.ndarray:
    """Uniforms in [0, 1), one per counter value."""
    bits = _hash(seed, stream, counters)
    return (bits >> np.uint64(11)).astype(np.float64) * _U53


def normal_field(seed: int, stream: int, counters) -> np.ndarray:
    """Standard normals, one per counter value (Box-Muller)."""
    bits1 = _hash(seed, stream * 2 + 1, counters)
    bits2 = _hash(seed, stream * 2 + 2, counters)
    # u1 in (0, 1] so the log is finite; u2 in [0, 1)
    u1 = ((bits1 >> np.uint64(11)).astype(np.float64) + 1.0) * _U53
    u2 = (bits2 >> np.uint64(11)).astype(np.float64) * _U53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
