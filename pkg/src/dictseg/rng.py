"""Seeded random number generation with named, splittable substreams.

Every random draw in the package flows through an `Rng`. The generator is
numpy's PCG64 behind `numpy.random.Generator`, seeded through
`numpy.random.SeedSequence`, so identical seeds reproduce identical draws
bit-for-bit on the same platform.

Substreams are derived by name rather than by spawn order: `derive("x")`
always yields the same stream for the same parent seed, no matter how many
other substreams were created first. This keeps parameter initialization
stable when a model variant drops or adds modules.
"""

from __future__ import annotations

import hashlib

import numpy as np

DEFAULT_SEED = 42


def _name_key(name: str) -> int:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class Rng:
    """Deterministic random source (PCG64) with named substreams."""

    def __init__(self, seed: int = DEFAULT_SEED, _path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._path = _path
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, *self._path]))
        )

    def derive(self, name: str) -> "Rng":
        """Return an independent stream identified by `name`."""
        return Rng(self.seed, self._path + (_name_key(name),))

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, std, size=shape)

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)
