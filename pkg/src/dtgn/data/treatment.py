"""Counterfactual treatment sampler for ejection fractions."""

import numpy as np

GAP = 0.1


def sample_cf_treatment(psi: float, rng: np.random.Generator, size=None):
    """Uniform draw from ``[0, psi - 0.1) U (psi + 0.1, 1]``, each segment
    weighted by its length; an empty segment is simply skipped."""
    lo = max(psi - GAP, 0.0)
    hi = max(1.0 - (psi + GAP), 0.0)
    u = rng.uniform(0.0, lo + hi, size=size)
    return np.where(u < lo, u, psi + GAP + (u - lo)) if size is not None else float(u if u < lo else psi + GAP + (u - lo))
