"""Seed plumbing: every random draw in the package descends from one seed.

Components derive child seeds from (seed, path...) tuples via SeedSequence, so
runs are reproducible bit-for-bit and per-component streams stay independent.
"""

from __future__ import annotations

import numpy as np


def seed_for(seed: int, *path: int) -> int:
    """Derive a deterministic child seed for a component path."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng_for(seed: int, *path: int) -> np.random.Generator:
    """Generator seeded from a component path under the top-level seed."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    )


# stream ids for the top-level components
STREAM_DATA = 0
STREAM_INIT = 1
STREAM_SHUFFLE = 2
STREAM_CLUSTER = 3
