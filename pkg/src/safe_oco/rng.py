"""Seeded random streams.

Every random quantity comes from a Philox-4x64 counter-based generator whose
key is derived by ``numpy.random.SeedSequence`` from ``(seed, stream id)``.
Independent streams per purpose mean, e.g., changing the horizon does not
perturb the exploration perturbations of the same seed.
"""

from __future__ import annotations

import numpy as np

STREAMS = {
    "baseline": 0,
    "explore": 1,
    "noise": 2,
    "scenario": 3,
    "prices": 4,
    "verify": 5,
}


def stream(seed: int, name: str) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(STREAMS[name],))
    return np.random.Generator(np.random.Philox(ss))
