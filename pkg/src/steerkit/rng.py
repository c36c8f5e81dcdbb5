"""Deterministic random streams for particle systems.

A run owns three counter-based streams derived from the master seed:
one for initial states, one for transition noise, one for resampling
draws.  Noise is drawn at the step barrier as a (k, dim) block whose
row i belongs to ensemble slot i, so results are independent of how
per-particle work is split across worker threads, and resampled copies
(which land in different slots) diverge deterministically.
"""
from __future__ import annotations

import numpy as np

_INIT_KEY = 0x5EED_0001
_NOISE_KEY = 0x5EED_0002
_RESAMPLE_KEY = 0x5EED_0003
_DERIVE_KEY = 0x5EED_0004


def _philox(master_seed: int, key: int, extra: tuple = ()) -> np.random.Generator:
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(key, *extra))
    return np.random.Generator(np.random.Philox(seq))


def derive_stream(master_seed: int, slot: int, generation: int) -> np.random.Generator:
    """Standalone stream addressed by (master seed, slot, generation)."""
    return _philox(master_seed, _DERIVE_KEY, (int(slot), int(generation)))


class RunStreams:
    """Stream bundle for one steering run."""

    def __init__(self, master_seed: int, k: int, dim: int):
        self.master_seed = int(master_seed)
        self.k = int(k)
        self.dim = int(dim)
        self._init = _philox(self.master_seed, _INIT_KEY)
        self._noise = _philox(self.master_seed, _NOISE_KEY)
        self._resample = _philox(self.master_seed, _RESAMPLE_KEY)

    def initial_block(self) -> np.ndarray:
        """(k, dim) standard-normal initial states; row i is slot i."""
        return self._init.standard_normal((self.k, self.dim))

    def initial_generator(self) -> np.random.Generator:
        """Generator for backends that draw their own initial states."""
        return self._init

    def noise_block(self) -> np.ndarray:
        """Next (k, dim) standard-normal transition-noise block."""
        return self._noise.standard_normal((self.k, self.dim))

    def resample_generator(self) -> np.random.Generator:
        return self._resample
