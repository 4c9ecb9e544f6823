"""Seedable random source with a fully specified algorithm.

Every stochastic result in the package flows through PortableRng so that runs
are reproducible from a single integer seed, independent of library defaults:

- bit stream: Philox-4x64-10 counter PRNG keyed by the seed,
- doubles in [0, 1): 53-bit conversion of the raw stream,
- standard normals: inverse CDF applied to a double, with u == 0 replaced by
  2**-54 so the transform never sees an endpoint,
- integers in [0, n): floor(u * n),
- permutations: Fisher-Yates driven by the integer draws.

Derived streams (parallel trials, workers) use key seed + index; see stream().
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_U_FLOOR = 2.0 ** -54


class PortableRng:
    def __init__(self, seed: int):
        if not isinstance(seed, (int, np.integer)):
            raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def stream(self, index: int) -> "PortableRng":
        """Independent derived stream, keyed seed + index (for trial/worker i)."""
        return PortableRng(self.seed + int(index))

    def random(self, shape=None) -> np.ndarray | float:
        """Uniform doubles in [0, 1)."""
        if shape is None:
            return float(self._gen.random())
        return self._gen.random(shape)

    def normal(self, shape=None) -> np.ndarray | float:
        u = self._gen.random(shape if shape is not None else ())
        u = np.where(u == 0.0, _U_FLOOR, u)
        z = ndtri(u)
        return float(z) if shape is None else np.asarray(z, dtype=np.float64)

    def integer(self, n: int) -> int:
        """Single integer uniform on [0, n)."""
        if n <= 0:
            raise ValueError(f"integer() needs n >= 1, got {n}")
        return int(self._gen.random() * n)

    def integers(self, n: int, size: int) -> np.ndarray:
        if n <= 0:
            raise ValueError(f"integers() needs n >= 1, got {n}")
        return np.floor(self._gen.random(size) * n).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of range(n)."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.integer(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def choice_no_replace(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), order random."""
        if k > n:
            raise ValueError(f"cannot draw {k} distinct values from range({n})")
        return self.permutation(n)[:k]
