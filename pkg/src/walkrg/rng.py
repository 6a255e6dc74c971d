"""Counter-based random streams.

Every replica gets its own Philox stream keyed by ``(seed, replica)``; the
stream is reproducible independently of how many other replicas exist or the
order they run in.
"""
from __future__ import annotations

import numpy as np


def stream(seed: int, replica: int = 0, *, purpose: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(purpose), int(replica)))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return stream(0)
    return stream(int(rng))
