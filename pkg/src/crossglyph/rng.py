"""Seeded, hierarchically splittable random streams.

Every stochastic choice in the package (weight init, shuffling,
augmentation draws, benchmark synthesis) flows through a SeededRng so
that a run is fully determined by its integer seed. Child streams are
derived from (seed, path) pairs, so consuming draws from one stream
never shifts another.
"""

from __future__ import annotations

import numpy as np

_PCG = "pcg64"


class SeededRng:
    """PCG64 stream addressed by a 64-bit seed plus an integer path."""

    __slots__ = ("seed", "path", "draw_count", "_gen")

    algorithm = _PCG

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        self.draw_count = 0
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys: int) -> "SeededRng":
        """Derive an independent stream; identical (seed, path) gives identical draws."""
        return SeededRng(self.seed, self.path + tuple(keys))

    def random(self) -> float:
        self.draw_count += 1
        return float(self._gen.random())

    def uniform(self, lo: float, hi: float) -> float:
        self.draw_count += 1
        return float(lo + (hi - lo) * self._gen.random())

    def integers(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi)."""
        self.draw_count += 1
        return int(self._gen.integers(lo, hi))

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None) -> np.ndarray:
        self.draw_count += 1
        return self._gen.normal(loc, scale, size)

    def random_array(self, shape) -> np.ndarray:
        self.draw_count += 1
        return self._gen.random(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of range(n), pinned here rather than delegated
        so the order survives numpy stream-policy changes."""
        order = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.integers(0, i + 1)
            order[i], order[j] = order[j], order[i]
        return order

    def sample_without_replacement(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), in draw order."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot draw {k} from {n}")
        pool = list(range(n))
        picked = []
        for i in range(k):
            j = self.integers(i, n)
            pool[i], pool[j] = pool[j], pool[i]
            picked.append(pool[i])
        return picked
