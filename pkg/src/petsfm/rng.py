"""Seeded, splittable pseudo-random numbers.

SplitMix64 expands a 64-bit seed into the state of a bank of xoshiro256**
generators ("lanes").  Each refill advances every lane once and emits one
word per lane, lane-major, which keeps bulk generation vectorised while the
output sequence stays a pure function of the seed and the call sequence.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_LANES = 1024


def splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step. Returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


class Rng:
    """xoshiro256** lanes seeded through SplitMix64."""

    def __init__(self, seed: int, lanes: int = _LANES):
        self.seed = int(seed) & _MASK64
        sm = self.seed
        words = []
        for _ in range(4 * lanes):
            sm, out = splitmix64(sm)
            words.append(out)
        self._s = np.array(words, dtype=np.uint64).reshape(4, lanes)
        self._buf = np.empty(0, dtype=np.uint64)

    def _refill(self, rounds: int) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        out = np.empty((rounds, s0.shape[0]), dtype=np.uint64)
        with np.errstate(over="ignore"):
            for r in range(rounds):
                out[r] = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
                t = s1 << np.uint64(17)
                s2 ^= s0
                s3 ^= s1
                s1 ^= s2
                s0 ^= s3
                s2 ^= t
                s3 = _rotl(s3, 45)
        self._s = np.stack([s0, s1, s2, s3])
        return out.reshape(-1)

    def next_u64(self, n: int) -> np.ndarray:
        """Return ``n`` raw 64-bit words."""
        if n > self._buf.size:
            lanes = self._s.shape[1]
            need = n - self._buf.size
            fresh = self._refill(-(-need // lanes))
            self._buf = np.concatenate([self._buf, fresh])
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def random(self, shape=()) -> np.ndarray:
        """Uniform float64 in [0, 1) with 53 random bits."""
        n = int(np.prod(shape, dtype=np.int64))
        u = self.next_u64(n) >> np.uint64(11)
        return (u.astype(np.float64) * 2.0**-53).reshape(shape)

    def random16(self, shape=()) -> np.ndarray:
        """Coarse float32 uniforms on a 2**-16 grid, four per 64-bit word (dropout masks)."""
        n = int(np.prod(shape, dtype=np.int64))
        words = self.next_u64(-(-n // 4))
        u = words.astype("<u8").view("<u2")[:n].astype(np.float32) * np.float32(2.0**-16)
        return u.reshape(shape)

    def uniform(self, low: float, high: float, shape=()) -> np.ndarray:
        return low + (high - low) * self.random(shape)

    def normal(self, shape=(), loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        """Box-Muller normals."""
        n = int(np.prod(shape, dtype=np.int64))
        m = (n + 1) // 2
        u1 = 1.0 - self.random(m)  # (0, 1]
        u2 = self.random(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return loc + scale * z[:n].reshape(shape)

    def integers(self, high: int, shape=()) -> np.ndarray:
        """Integers in [0, high) (multiply-shift; bias below 2**-53 * high)."""
        return np.floor(self.random(shape) * high).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.random(n), kind="stable")

    def split(self) -> "Rng":
        """Independent child generator, seeded from this stream."""
        return Rng(int(self.next_u64(1)[0]), lanes=self._s.shape[1])
