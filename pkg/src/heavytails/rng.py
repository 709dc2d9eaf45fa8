"""Deterministic, splittable random streams.

Every stochastic operation in the package draws from an :class:`RngStream`,
a thin wrapper over numpy's counter-based Philox generator keyed by a
``(seed, *stream_ids)`` tuple.  Identical keys reproduce identical draw
sequences bit for bit; distinct keys give statistically independent
streams, so per-step or per-chain substreams can be derived without any
shared mutable state.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    """A seeded random stream addressable by a hierarchy of integer ids.

    Parameters
    ----------
    seed:
        64-bit base seed.
    stream_ids:
        Optional integer path distinguishing this stream from siblings
        derived from the same seed (e.g. ``(step, chain)``).
    """

    def __init__(self, seed: int, *stream_ids: int):
        self.seed = int(seed)
        self.stream_ids = tuple(int(s) for s in stream_ids)
        key = (self.seed,) + self.stream_ids
        self._gen = np.random.Generator(np.random.Philox(seed=np.random.SeedSequence(key)))

    def substream(self, *stream_ids: int) -> "RngStream":
        """Derive an independent child stream from this stream's key."""
        return RngStream(self.seed, *(self.stream_ids + tuple(int(s) for s in stream_ids)))

    def standard_normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size=size)

    def standard_gamma(self, shape, size=None) -> np.ndarray:
        return self._gen.standard_gamma(shape, size=size)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size=size)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self._gen.integers(low, high=high, size=size)

    def choice_signs(self, size=None) -> np.ndarray:
        """Rademacher draws in {-1.0, +1.0}."""
        return 2.0 * self._gen.integers(0, 2, size=size).astype(np.float64) - 1.0

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_ids={self.stream_ids})"
