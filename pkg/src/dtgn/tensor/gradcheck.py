"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np

from .core import Tensor, backward, record_branches


def relative_error(analytic: float, numeric: float, floor: float = 1e-4) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _same_piece(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def grad_check(fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-3,
               max_coords: int = 20, rng: np.random.Generator | None = None, floor: float = 1e-4,
               stats: dict | None = None) -> float:
    """Max relative error between ``backward`` and central differences.

    ``fn`` recomputes the scalar output from the current values of ``params``.
    At most ``max_coords`` coordinates per parameter are probed (a random
    subset for larger tensors). Gradients with magnitude below ``floor`` are
    compared in absolute terms.

    Central differences are only an oracle where ``fn`` is smooth on
    [p - eps, p + eps]. A coordinate whose two evaluations take different
    branches in a piecewise primitive (ReLU mask, pooling argmax, nearest
    code) straddles a kink; it is skipped and the next candidate is probed.
    ``stats`` receives the counts of checked and skipped coordinates.
    """
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.grad = None
    backward(fn(), params)
    worst = 0.0
    checked = skipped = 0
    for p in params:
        analytic = p.grad.reshape(-1).copy()
        flat = p.data.reshape(-1)
        order = rng.permutation(flat.size) if flat.size > max_coords else np.arange(flat.size)
        done = 0
        for i in order:
            if done == max_coords:
                break
            orig = flat[i]
            flat[i] = orig + eps
            with record_branches() as up_path:
                up = fn().item()
            flat[i] = orig - eps
            with record_branches() as down_path:
                down = fn().item()
            flat[i] = orig
            if not _same_piece(up_path, down_path):
                skipped += 1
                continue
            done += 1
            numeric = (up - down) / (2 * eps)
            worst = max(worst, relative_error(float(analytic[i]), numeric, floor))
        checked += done
    if stats is not None:
        stats.update(checked=checked, skipped=skipped)
    return worst
