"""Derived random streams.

Every source of randomness in a run is keyed off the single user seed by
mixing it with a fixed purpose tag and any loop indices (round, client)
through SplitMix64. Streams for distinct keys are independent, so clients
can be scheduled in any order without perturbing each other's draws.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# purpose tags
SYNTH = 1
SPLIT = 2
PARTITION = 3
INIT = 4
TRAIN = 5
NOISE = 6


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix64(*words: int) -> int:
    """Fold integers into one 64-bit key: h = splitmix64(h ^ w) per word."""
    h = 0
    for w in words:
        h = splitmix64(h ^ (int(w) & MASK64))
    return h


def derive_seed(seed: int, *words: int) -> int:
    return mix64(seed, *words)


def stream(seed: int, *words: int) -> np.random.Generator:
    """PCG64 generator seeded by ``mix64(seed, *words)``."""
    return np.random.Generator(np.random.PCG64(mix64(seed, *words)))
