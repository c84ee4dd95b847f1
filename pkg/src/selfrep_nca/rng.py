"""Counter-based random stream for reproducible stochastic updates.

Each draw is generated by a Philox generator keyed by ``seed`` whose
counter block is set from the draw index, so any ``(seed, counter)`` pair
reproduces the same numbers regardless of what was drawn before.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass
class RngStream:
    seed: int = 0
    counter: int = 0

    def _generator(self) -> np.random.Generator:
        # draw index lives in the top 64-bit word; Philox increments the low words
        bits = np.random.Philox(key=self.seed & _MASK64, counter=(self.counter & _MASK64) << 192)
        self.counter += 1
        return np.random.Generator(bits)

    def random(self, shape) -> np.ndarray:
        """Uniform floats in [0, 1), filled in C (row-major) order."""
        return self._generator().random(shape)

    def integers(self, high: int, size=None):
        return self._generator().integers(high, size=size)

    def permutations(self, n_rows: int, n: int) -> np.ndarray:
        gen = self._generator()
        return np.stack([gen.permutation(n) for _ in range(n_rows)]) if n_rows else np.empty((0, n), int)

    def normal(self, shape, scale: float = 1.0) -> np.ndarray:
        return self._generator().normal(0.0, scale, shape)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._generator().uniform(low, high, shape)

    def fork(self, offset: int) -> "RngStream":
        """Independent stream derived from this seed."""
        return RngStream(seed=(self.seed * 0x9E3779B97F4A7C15 + offset + 1) & _MASK64, counter=0)

    def state(self) -> tuple[int, int]:
        return self.seed, self.counter
