"""Platform-independent random streams: SplitMix64 -> uniform doubles -> Box-Muller normals."""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Vectorized SplitMix64.

    The generator is counter based (state_i = seed + i * gamma), so a block of
    ``n`` outputs is produced in one numpy pass and the stream position simply
    advances by ``n``.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.position = 0

    def next_u64(self, n: int) -> np.ndarray:
        counters = np.arange(self.position + 1, self.position + n + 1, dtype=np.uint64)
        self.position += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + counters * _GAMMA
            z = (z ^ (z >> np.uint64(30))) * _M1
            z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles in [0, 1) from the top 53 bits of each output."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

    def normal(self, n: int) -> np.ndarray:
        """``n`` standard normals; each pair of uniforms yields two values."""
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        radius = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))
        angle = 2.0 * np.pi * u[:, 1]
        z = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1).reshape(-1)
        return z[:n]
