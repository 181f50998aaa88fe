"""Deterministic random-stream derivation.

Every stochastic component owns an isolated stream derived from a 64-bit
master seed plus a structured key (stream label, axis index, seed index,
...).  Streams are PCG64 generators; normal variates use numpy's ziggurat,
so replays are bit-stable for a fixed numpy build.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def seed_sequence(master_seed: int, *key: int) -> np.random.SeedSequence:
    """SeedSequence for ``master_seed`` refined by an integer key path."""
    return np.random.SeedSequence(
        entropy=master_seed & _MASK64, spawn_key=tuple(k & _MASK64 for k in key)
    )


def derive_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Generator owning the stream addressed by ``(master_seed, *key)``."""
    return np.random.default_rng(seed_sequence(master_seed, *key))


def derive_seed(master_seed: int, *key: int) -> int:
    """Collapse a stream address into a plain 64-bit integer seed."""
    return int(seed_sequence(master_seed, *key).generate_state(1, np.uint64)[0])
