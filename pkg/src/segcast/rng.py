"""Seeded xorshift-family PRNG.

All randomness in the package (parameter init, minibatch shuffling, data
generation) flows through this module so that a single integer seed pins
every artifact bit-for-bit, independent of numpy's global state.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_INV_2_53 = 2.0 ** -53


def splitmix64(x: int) -> int:
    """One splitmix64 step; used for seeding and stream derivation."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class Xorshift:
    """xorshift64* stream over python ints (portable, overflow-free)."""

    def __init__(self, seed: int):
        # splitmix64 guards against the all-zero state xorshift cannot leave
        self.state = splitmix64(seed & _MASK) or 0x9E3779B97F4A7C15
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        s = self.state
        s ^= (s >> 12)
        s ^= (s << 25) & _MASK
        s ^= (s >> 27)
        self.state = s
        return (s * 0x2545F4914F6CDD1D) & _MASK

    def next_float(self) -> float:
        """Uniform double in [0, 1) with 53 bits of entropy."""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniform(self, low: float, high: float, shape=None):
        if shape is None:
            return low + (high - low) * self.next_float()
        out = np.empty(int(np.prod(shape)), dtype=np.float64)
        span = high - low
        for i in range(out.size):
            out[i] = low + span * self.next_float()
        return out.reshape(shape)

    def normal(self, shape=None, mean: float = 0.0, std: float = 1.0):
        if shape is None:
            return mean + std * self._next_normal()
        out = np.empty(int(np.prod(shape)), dtype=np.float64)
        for i in range(out.size):
            out[i] = mean + std * self._next_normal()
        return out.reshape(shape)

    def _next_normal(self) -> float:
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        # Box-Muller; u1 shifted into (0, 1] so log never sees zero
        u1 = ((self.next_u64() >> 11) + 1) * _INV_2_53
        u2 = self.next_float()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def integer(self, n: int) -> int:
        """Integer in [0, n). Modulo bias is below 2**-50 for our n."""
        return self.next_u64() % n

    def permutation(self, n: int) -> np.ndarray:
        idx = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.integer(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx

    def spawn(self, index: int) -> "Xorshift":
        """Independent child stream; deterministic in (state, index)."""
        return Xorshift(splitmix64(self.state ^ splitmix64(index)))


class StreamBank:
    """Vectorized bundle of per-item xorshift64* streams.

    Each item (e.g. one data window) gets its own stream derived from the
    master seed and its index, so generation order and parallel chunking
    cannot change the output.
    """

    def __init__(self, master_seed: int, n: int):
        idx = np.arange(n, dtype=np.uint64)
        base = np.uint64(splitmix64(master_seed & _MASK))
        states = _splitmix64_vec(base + idx * np.uint64(0x9E3779B97F4A7C15))
        states[states == 0] = np.uint64(0x9E3779B97F4A7C15)
        self.states = states

    def next_u64(self) -> np.ndarray:
        s = self.states
        s = s ^ (s >> np.uint64(12))
        s = s ^ ((s << np.uint64(25)) & np.uint64(_MASK))
        s = s ^ (s >> np.uint64(27))
        self.states = s
        return s * np.uint64(0x2545F4914F6CDD1D)

    def uniform(self) -> np.ndarray:
        """One uniform [0,1) draw per stream."""
        return (self.next_u64() >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def normal(self, cols: int) -> np.ndarray:
        """(n, cols) standard normals, Box-Muller over stream pairs."""
        pairs = (cols + 1) // 2
        out = np.empty((self.states.size, 2 * pairs), dtype=np.float64)
        for p in range(pairs):
            u1 = ((self.next_u64() >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
            u2 = self.uniform()
            r = np.sqrt(-2.0 * np.log(u1))
            out[:, 2 * p] = r * np.cos(2.0 * np.pi * u2)
            out[:, 2 * p + 1] = r * np.sin(2.0 * np.pi * u2)
        return out[:, :cols]


def _splitmix64_vec(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))
