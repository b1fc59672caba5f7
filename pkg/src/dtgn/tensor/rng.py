"""Counter-based random streams keyed by (seed, component, counters...)."""

import zlib

import numpy as np


def stream(seed: int, component: str, *counters: int) -> np.random.Generator:
    """Independent, reproducible generator for one component and position.

    Streams for different components or counters never share state, so adding
    a consumer never perturbs another one's draws.
    """
    key = [int(seed) & 0xFFFFFFFF, zlib.crc32(component.encode()), *(int(c) for c in counters)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
