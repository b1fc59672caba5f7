"""Adam with bias correction."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatchError
from .core import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState) -> AdamState:
    """Update ``params`` in place and return ``state`` with the step counter advanced."""
    if len(params) != len(grads):
        raise ShapeMismatchError(f"adam: {len(params)} params but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeMismatchError(f"adam: gradient {g.shape} / moment {m.shape} vs parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        mhat = m / c1
        vhat = v / c2
        p.data -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.dtype)
    return state


class Adam:
    """Thin stateful wrapper that reads ``.grad`` off each parameter."""

    def __init__(self, params: Sequence[Tensor], lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step(self.params, grads, self.state)

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}/step": np.array([self.state.step], dtype=np.float32)}
        for i, (m, v) in enumerate(zip(self.state.m, self.state.v)):
            out[f"{prefix}/m/{i}"] = m
            out[f"{prefix}/v/{i}"] = v
        return out

    def load_state_arrays(self, prefix: str, arrays: dict[str, np.ndarray]):
        key = f"{prefix}/step"
        if key not in arrays:
            return
        self.state.step = int(arrays[key][0])
        n = len(self.params)
        self.state.m = [arrays[f"{prefix}/m/{i}"].copy() for i in range(n)]
        self.state.v = [arrays[f"{prefix}/v/{i}"].copy() for i in range(n)]
