"""Counter-based random numbers for reproducible parallel Monte Carlo.

Every draw is a pure function of (master_seed, stream_index, tag, counter)
through Philox4x64-10, so trajectory ensembles produce bit-identical output
regardless of execution order, chunking, or thread count.  The same algorithm
is implemented in the compiled kernel; this module is the NumPy reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

U64 = np.uint64
_MASK32 = U64(0xFFFFFFFF)

# Philox4x64 multipliers and Weyl key increments
_M0 = U64(0xD2E7470EE14C6C93)
_M1 = U64(0xCA5A826395121157)
_W0 = U64(0x9E3779B97F4A7C15)
_W1 = U64(0xBB67AE8584CAA73B)

# draw-family tags kept in the second counter word so the gaussian, uniform,
# and jump streams of one trajectory never collide
GAUSS_TAG = 0
UNIFORM_TAG = 1
JUMP_TAG = 2

_INV53 = 1.0 / (1 << 53)


def _u64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.uint64)


def splitmix64(z) -> np.ndarray:
    """SplitMix64 finalizer; a bijection on 64-bit integers."""
    z = _u64(z).copy()
    with np.errstate(over="ignore"):
        z += _W0
        z = (z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)
        z = z ^ (z >> U64(31))
    return z


def stream_keys(master_seed: int, stream_indices) -> tuple[np.ndarray, np.ndarray]:
    """Philox key pair for each stream; distinct streams get distinct keys."""
    idx = _u64(stream_indices)
    seed = _u64(master_seed & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        base = splitmix64(idx) ^ seed
        k0 = splitmix64(base)
        k1 = splitmix64(base ^ U64(0x5851F42D4C957F2D))
    return k0, k1


def _mulhilo64(a: np.ndarray, m: np.uint64) -> tuple[np.ndarray, np.ndarray]:
    # 64x64 -> 128 bit product via 32-bit limbs (wrapping arithmetic throughout)
    a_lo = a & _MASK32
    a_hi = a >> U64(32)
    m_lo = m & _MASK32
    m_hi = m >> U64(32)
    ll = a_lo * m_lo
    lh = a_lo * m_hi
    hl = a_hi * m_lo
    hh = a_hi * m_hi
    mid = (ll >> U64(32)) + (lh & _MASK32) + (hl & _MASK32)
    lo = (ll & _MASK32) | ((mid & _MASK32) << U64(32))
    hi = hh + (lh >> U64(32)) + (hl >> U64(32)) + (mid >> U64(32))
    return hi, lo


def philox4x64(c0, c1, c2, c3, k0, k1) -> tuple[np.ndarray, ...]:
    """Philox4x64 with 10 rounds; all arguments broadcastable uint64 arrays."""
    v0, v1, v2, v3 = _u64(c0).copy(), _u64(c1).copy(), _u64(c2).copy(), _u64(c3).copy()
    k0 = _u64(k0).copy()
    k1 = _u64(k1).copy()
    with np.errstate(over="ignore"):
        for r in range(10):
            if r > 0:
                k0 = k0 + _W0
                k1 = k1 + _W1
            hi0, lo0 = _mulhilo64(v0, _M0)
            hi1, lo1 = _mulhilo64(v2, _M1)
            v0, v1, v2, v3 = hi1 ^ v1 ^ k0, lo1, hi0 ^ v3 ^ k1, lo0
    return v0, v1, v2, v3


def _block_from_keys(k0, k1, tag: int, counters):
    ctr = _u64(counters)
    return philox4x64(ctr, np.full_like(ctr, tag), np.zeros_like(ctr), np.zeros_like(ctr), k0, k1)


def uniform_from_keys(k0, k1, counters, tag: int = UNIFORM_TAG):
    """One uniform in [0, 1) per (key, counter) pair."""
    w0, _, _, _ = _block_from_keys(k0, k1, tag, counters)
    return (w0 >> U64(11)).astype(np.float64) * _INV53


def gaussian_from_keys(k0, k1, counters, tag: int = GAUSS_TAG):
    """One standard normal per (key, counter) pair (Box-Muller, cosine branch)."""
    w0, w1, _, _ = _block_from_keys(k0, k1, tag, counters)
    u1 = ((w0 >> U64(11)).astype(np.float64) + 1.0) * _INV53  # in (0, 1]
    u2 = (w1 >> U64(11)).astype(np.float64) * _INV53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)


def uniform_draws(master_seed: int, stream_indices, counters, tag: int = UNIFORM_TAG):
    """One uniform in [0, 1) per (stream, counter) pair."""
    k0, k1 = stream_keys(master_seed, stream_indices)
    return uniform_from_keys(k0, k1, counters, tag)


def gaussian_draws(master_seed: int, stream_indices, counters, tag: int = GAUSS_TAG):
    """One standard normal per (stream, counter) pair."""
    k0, k1 = stream_keys(master_seed, stream_indices)
    return gaussian_from_keys(k0, k1, counters, tag)


@dataclass
class RngStream:
    """Stateful view of one reproducible stream.

    Identical (master_seed, stream_index) always replays the same draw
    sequence; the per-tag counters are the only mutable state.
    """

    master_seed: int
    stream_index: int = 0
    _counters: Dict[int, int] = field(default_factory=dict, repr=False)

    def _take(self, tag: int, n: int) -> np.ndarray:
        start = self._counters.get(tag, 0)
        self._counters[tag] = start + n
        return np.arange(start, start + n, dtype=np.uint64)

    def gaussians(self, n: int) -> np.ndarray:
        ctr = self._take(GAUSS_TAG, n)
        idx = np.full(n, self.stream_index, dtype=np.uint64)
        return gaussian_draws(self.master_seed, idx, ctr)

    def uniforms(self, n: int) -> np.ndarray:
        ctr = self._take(UNIFORM_TAG, n)
        idx = np.full(n, self.stream_index, dtype=np.uint64)
        return uniform_draws(self.master_seed, idx, ctr)
