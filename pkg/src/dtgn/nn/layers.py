"""Parameter containers and the layers the models are assembled from.

Video tensors use the layout (batch, channels, frames, height, width).
Spatial convolutions fold frames into the batch axis; temporal convolutions
view (frames, height*width) as a 2-D plane and use (k, 1) kernels, giving the
factorized (2+1)D scheme without a 3-D convolution primitive.
"""

from __future__ import annotations

from collections.abc import Iterator

import numpy as np

from ..tensor import Tensor, conv2d, conv_transpose2d, maxpool2d, upsample_nearest2d


class Module:
    """Base class. Tensor attributes are parameters; Module attributes and
    lists of Modules are children. Attribute order fixes parameter order."""

    training_frozen = False

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix + name + ".")
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, child in enumerate(value):
                    yield from child.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, arrays: dict[str, np.ndarray], prefix: str = "") -> None:
        for name, p in self.named_parameters():
            key = prefix + name
            if key not in arrays:
                raise KeyError(f"checkpoint has no entry {key!r}")
            if arrays[key].shape != p.shape:
                raise ValueError(f"{key}: checkpoint shape {arrays[key].shape} != parameter shape {p.shape}")
            p.data = np.array(arrays[key], dtype=p.dtype)

    def freeze(self) -> Module:
        """Stop parameter updates; gradients still flow through to inputs."""
        for p in self.parameters():
            p.requires_grad = False
            p.grad = None
        self.training_frozen = True
        return self

    def to(self, dtype) -> Module:
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _uniform(rng: np.random.Generator, shape, fan_in: int, gain: float = 2.0) -> Tensor:
    bound = np.sqrt(3.0 * gain / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(np.float32), requires_grad=True)


def _zeros(n: int) -> Tensor:
    return Tensor(np.zeros(n, dtype=np.float32), requires_grad=True)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, gain: float = 2.0):
        self.weight = _uniform(rng, (n_in, n_out), n_in, gain)
        self.bias = _zeros(n_out)

    def forward(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, rng, stride=1, padding=None, gain=2.0):
        kh, kw = kernel if isinstance(kernel, tuple) else (kernel, kernel)
        self.stride = stride
        self.padding = padding if padding is not None else (kh // 2, kw // 2)
        self.weight = _uniform(rng, (c_out, c_in, kh, kw), c_in * kh * kw, gain)
        self.bias = _zeros(c_out)

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    def __init__(self, c_in, c_out, kernel, rng, stride=2, padding=1, gain=2.0):
        self.stride = stride
        self.padding = padding
        fan_in = c_in * kernel * kernel // (stride * stride)
        self.weight = _uniform(rng, (c_in, c_out, kernel, kernel), max(fan_in, 1), gain)
        self.bias = _zeros(c_out)

    def forward(self, x: Tensor) -> Tensor:
        return conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)


# (2+1)D helpers on (B, C, T, H, W)


def frames_to_batch(x: Tensor) -> Tensor:
    b, c, t, h, w = x.shape
    return x.transpose(0, 2, 1, 3, 4).reshape(b * t, c, h, w)


def batch_to_frames(y: Tensor, b: int) -> Tensor:
    bt, c, h, w = y.shape
    return y.reshape(b, bt // b, c, h, w).transpose(0, 2, 1, 3, 4)


class SpatialConv(Module):
    """Same 2-D convolution applied to every frame."""

    def __init__(self, c_in, c_out, kernel, rng, padding=None, gain=2.0):
        self.conv = Conv2d(c_in, c_out, kernel, rng, padding=padding, gain=gain)

    def forward(self, x: Tensor) -> Tensor:
        return batch_to_frames(self.conv(frames_to_batch(x)), x.shape[0])


class TemporalConv(Module):
    """Convolution along the frame axis only, zero-padded to keep the length."""

    def __init__(self, c_in, c_out, kernel, rng, gain=2.0):
        self.conv = Conv2d(c_in, c_out, (kernel, 1), rng, padding=(kernel // 2, 0), gain=gain)

    def forward(self, x: Tensor) -> Tensor:
        b, c, t, h, w = x.shape
        y = self.conv(x.reshape(b, c, t, h * w))
        return y.reshape(b, y.shape[1], t, h, w)


def spatial_pool(x: Tensor, k: int = 2) -> Tensor:
    b, c, t, h, w = x.shape
    return maxpool2d(x.reshape(b, c * t, h, w), k).reshape(b, c, t, h // k, w // k)


def spatial_upsample(x: Tensor, k: int = 2) -> Tensor:
    b, c, t, h, w = x.shape
    return upsample_nearest2d(x.reshape(b, c * t, h, w), k).reshape(b, c, t, h * k, w * k)
