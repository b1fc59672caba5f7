"""Sampler for the shared outcome noise ``U_Y = (N(0, var) mod 1) + 1``."""

import numpy as np

_UPPER = np.nextafter(np.float32(2.0), np.float32(0.0))


def sample_noise(rng: np.random.Generator, shape, variance: float = 0.25) -> np.ndarray:
    """Float32 draws in [1, 2). ``variance`` is the Normal's variance (std = sqrt)."""
    raw = rng.normal(0.0, np.sqrt(variance), size=shape)
    u = (np.mod(raw, 1.0) + 1.0).astype(np.float32)
    # mod of tiny negatives can round to exactly 1.0, and float32 casting can round up to 2.0
    return np.clip(u, np.float32(1.0), _UPPER)
