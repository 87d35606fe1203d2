"""Deterministic splittable random streams.

Every stochastic object in the package draws from a counter-based Philox
generator addressed by an integer path under a master seed:

    substream(seed)                     -- root stream
    substream(seed, TAG_PARTICLE, i)    -- particle i of an ensemble
    substream(seed, TAG_REPLICA, r)     -- replica r of a Monte Carlo run
    substream(seed, TAG_REPLICA, r, TAG_PARTICLE, i)

The derivation is purely functional (``SeedSequence`` with an explicit
``spawn_key``), so the stream for a given path is identical no matter how
many threads are running or in which order work is scheduled.
"""

from __future__ import annotations

import numpy as np

# Path tags. Keeping them distinct guarantees e.g. that an ensemble's event
# stream never collides with any particle stream under the same seed.
TAG_PARTICLE = 0
TAG_EVENT = 1
TAG_REPLICA = 2
TAG_INIT = 3


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the sub-stream addressed by ``path`` under ``seed``."""
    if seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
