"""
Deterministic random stream derivation.

Every consumer of randomness gets its own ``numpy.random.Generator`` keyed by
``(master seed, stream, *indices)``, so results never depend on the order in
which workers, rounds or matrix cells happen to execute.
"""
from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    """Named randomness consumers."""
    DATA = 1
    GRADIENT = 2
    ATTACK = 3
    VOTE = 4
    MODEL_INIT = 5
    INSTANCE = 6
    DIAGNOSTIC = 7
    GEOMETRY = 8


def derive_rng(seed: int, stream: Stream, *indices: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, stream, indices)``."""
    entropy = [int(seed) & 0xFFFFFFFF, int(stream)] + [int(i) & 0xFFFFFFFF for i in indices]
    return np.random.default_rng(np.random.SeedSequence(entropy))

