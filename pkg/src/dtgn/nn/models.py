"""The networks of the deep twin generative model.

* :class:`VideoGenerator` and :class:`EmbeddingGenerator` are single
  generator branches ``Y = f(X, Z, U_Y)``; the factual and counterfactual
  outcomes come from two calls of the *same* branch (:func:`twin_generate`).
* :class:`ExpertRegressor` maps a clip to an ejection fraction in [0, 1].
* :class:`FrameDiscriminator` scores realism per frame or per clip.
* :class:`VQAutoencoder` projects glyph images to a quantized latent grid.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ShapeMismatchError
from ..tensor import Tensor, concat, leaky_relu, maxpool2d, mse_loss, relu, sigmoid, take_rows
from ..tensor.core import broadcast_to, note_branch
from .layers import (
    Conv2d,
    ConvTranspose2d,
    Linear,
    Module,
    SpatialConv,
    TemporalConv,
    frames_to_batch,
    batch_to_frames,
    spatial_pool,
    spatial_upsample,
)


def _as_video(z) -> Tensor:
    z = z if isinstance(z, Tensor) else Tensor(z)
    if z.ndim != 4:
        raise ShapeMismatchError(f"expected video batch (B, T, H, W), got {z.shape}")
    b, t, h, w = z.shape
    return z.reshape(b, 1, t, h, w)


def _as_column(x, batch: int, like: Tensor) -> Tensor:
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=like.dtype).reshape(-1), dtype=like.dtype)
    if x.size != batch:
        raise ShapeMismatchError(f"treatment has {x.size} entries for a batch of {batch}")
    return x.reshape(batch, 1)


@dataclass
class VideoGeneratorConfig:
    frames: int = 8
    size: int = 32
    channels: tuple[int, int] = (16, 32)
    # add the half-resolution encoder features back in the decoder
    skip: bool = True


class VideoGenerator(Module):
    """Encoder -> (treatment channel, multiplicative noise) -> decoder.

    The treatment is broadcast to a constant feature channel and concatenated
    at the bottleneck; the combined features are multiplied by ``U_Y`` (one
    factor per bottleneck channel) before decoding. With ``skip`` the
    half-resolution encoder features, mixed with the same treatment channel,
    are added back after the first upsampling. This carries texture past the
    bottleneck; the noise enters at the bottleneck only.
    """

    def __init__(self, config: VideoGeneratorConfig, rng: np.random.Generator):
        self.config = config
        c1, c2 = config.channels
        if config.size % 4:
            raise ShapeMismatchError(f"size {config.size} must be divisible by 4")
        self.enc1_s = SpatialConv(1, c1, 3, rng)
        self.enc1_t = TemporalConv(c1, c1, 3, rng, gain=1.0)
        self.enc2_s = SpatialConv(c1, c2, 3, rng)
        self.enc2_t = TemporalConv(c2, c2, 3, rng, gain=1.0)
        self.combine = SpatialConv(c2 + 1, c2, 3, rng)
        self.mid_t = TemporalConv(c2, c2, 3, rng, gain=1.0)
        self.dec1_s = SpatialConv(c2, c1, 3, rng)
        self.dec1_t = TemporalConv(c1, c1, 3, rng, gain=1.0)
        self.dec2_s = SpatialConv(c1, c1, 3, rng)
        self.out = SpatialConv(c1, 1, 3, rng, gain=1.0)
        # the skip path sees the treatment too, so it can reshape what it carries
        self.skip_mix = SpatialConv(c2 + 1, c2, 3, rng) if config.skip else None

    def noise_shape(self, batch: int) -> tuple[int, ...]:
        return (batch, self.config.channels[1])

    def forward(self, z, x, u_y) -> Tensor:
        v = _as_video(z)
        b, _, t, h, w = v.shape
        cfg = self.config
        if (t, h, w) != (cfg.frames, cfg.size, cfg.size):
            raise ShapeMismatchError(f"video {(t, h, w)} does not match configured {(cfg.frames, cfg.size, cfg.size)}")
        u = u_y if isinstance(u_y, Tensor) else Tensor(np.asarray(u_y, dtype=v.dtype), dtype=v.dtype)
        if u.shape != self.noise_shape(b):
            raise ShapeMismatchError(f"U_Y shape {u.shape} != expected {self.noise_shape(b)}")

        e = relu(self.enc1_s(v))
        e = relu(e + self.enc1_t(e))
        e = spatial_pool(e)
        e = relu(self.enc2_s(e))
        e = relu(e + self.enc2_t(e))
        half = e
        e = spatial_pool(e)

        xb = _as_column(x, b, v).reshape(b, 1, 1, 1, 1)
        xc = broadcast_to(xb, (b, 1) + e.shape[2:])
        hdn = relu(self.combine(concat([e, xc], axis=1)))
        hdn = hdn * u.reshape(b, u.shape[1], 1, 1, 1)
        hdn = relu(hdn + self.mid_t(hdn))

        d = spatial_upsample(hdn)
        if cfg.skip:
            xh = broadcast_to(xb, (b, 1) + half.shape[2:])
            d = d + relu(self.skip_mix(concat([half, xh], axis=1)))
        d = relu(self.dec1_s(d))
        d = relu(d + self.dec1_t(d))
        d = spatial_upsample(d)
        d = relu(self.dec2_s(d))
        y = sigmoid(self.out(d))
        return y.reshape(b, t, h, w)


@dataclass
class EmbeddingGeneratorConfig:
    confounder_dim: int = 14
    treatment_dim: int = 8
    hidden: int = 128
    out_shape: tuple[int, int, int] = (8, 4, 4)


class EmbeddingGenerator(Module):
    """Fully connected branch mapping (Z, X, U_Y) to a latent embedding grid."""

    def __init__(self, config: EmbeddingGeneratorConfig, rng: np.random.Generator):
        self.config = config
        hid = config.hidden
        self.fc_in = Linear(config.confounder_dim + config.treatment_dim, hid, rng)
        self.fc_combine = Linear(hid, hid, rng)
        self.fc_up = Linear(hid, 2 * hid, rng)
        self.fc_out = Linear(2 * hid, int(np.prod(config.out_shape)), rng, gain=1.0)

    def noise_shape(self, batch: int) -> tuple[int, ...]:
        return (batch, self.config.hidden)

    def forward(self, z, x, u_y) -> Tensor:
        z = z if isinstance(z, Tensor) else Tensor(z)
        x = x if isinstance(x, Tensor) else Tensor(x)
        b = z.shape[0]
        if z.shape[1] != self.config.confounder_dim or x.shape != (b, self.config.treatment_dim):
            raise ShapeMismatchError(f"confounder {z.shape} / treatment {x.shape} do not match the configuration")
        u = u_y if isinstance(u_y, Tensor) else Tensor(u_y)
        if u.shape != self.noise_shape(b):
            raise ShapeMismatchError(f"U_Y shape {u.shape} != expected {self.noise_shape(b)}")
        hdn = relu(self.fc_in(concat([z, x], axis=1)))
        hdn = relu(self.fc_combine(hdn)) * u
        hdn = relu(self.fc_up(hdn))
        return self.fc_out(hdn).reshape((b,) + tuple(self.config.out_shape))


def generate(branch: Module, z, x, u_y) -> Tensor:
    return branch(z, x, u_y)


def twin_generate(branch: Module, z, x, x_star, u_y) -> tuple[Tensor, Tensor]:
    """Factual and counterfactual outcomes: same weights, confounder and noise."""
    return generate(branch, z, x, u_y), generate(branch, z, x_star, u_y)


@dataclass
class ExpertConfig:
    frames: int = 8
    size: int = 32
    channels: tuple[int, int, int, int] = (8, 16, 32, 32)
    hidden: int = 64


class ExpertRegressor(Module):
    """Four (2+1)D residual stages, spatial average, then an MLP over time."""

    def __init__(self, config: ExpertConfig, rng: np.random.Generator):
        self.config = config
        chans = (1,) + tuple(config.channels)
        self.spatial = [SpatialConv(chans[i], chans[i + 1], 3, rng) for i in range(4)]
        self.temporal = [TemporalConv(chans[i + 1], chans[i + 1], 3, rng, gain=1.0) for i in range(4)]
        self.fc1 = Linear(chans[-1] * config.frames, config.hidden, rng)
        self.fc2 = Linear(config.hidden, 1, rng, gain=1.0)

    def forward(self, video) -> Tensor:
        v = _as_video(video)
        b, _, t, h, w = v.shape
        cfg = self.config
        if (t, h, w) != (cfg.frames, cfg.size, cfg.size):
            raise ShapeMismatchError(f"video {(t, h, w)} does not match configured {(cfg.frames, cfg.size, cfg.size)}")
        e = v
        for i, (s, tc) in enumerate(zip(self.spatial, self.temporal)):
            e = relu(s(e))
            e = relu(e + tc(e))
            if i < 3:
                e = spatial_pool(e)
        feat = e.mean(axis=(3, 4)).reshape(b, -1)
        out = sigmoid(self.fc2(relu(self.fc1(feat))))
        return out.reshape(b)


def expert_predict(expert: ExpertRegressor, video) -> Tensor:
    return expert(video)


@dataclass
class DiscriminatorConfig:
    size: int = 32
    frames: int = 8
    channels: tuple[int, ...] = (8, 16, 16, 32, 32)
    kernels: tuple[int, ...] = (3, 5, 7)
    video: bool = False


class MultiscaleBlock(Module):
    """Parallel convolutions (one per kernel size, 'same' padding) summed with
    a residual path, leaky ReLU, then 2x2 max-pooling. In video mode a
    temporal convolution follows the spatial paths."""

    def __init__(self, c_in, c_out, kernels, rng, video=False):
        self.paths = [Conv2d(c_in, c_out, k, rng, padding=k // 2, gain=2.0 / len(kernels)) for k in kernels]
        self.skip = Conv2d(c_in, c_out, 1, rng, padding=0, gain=1.0) if c_in != c_out else None
        self.temporal = TemporalConv(c_out, c_out, 3, rng, gain=1.0) if video else None

    def forward(self, x: Tensor, batch: int | None = None) -> Tensor:
        y = self.paths[0](x)
        for p in self.paths[1:]:
            y = y + p(x)
        y = y + (self.skip(x) if self.skip is not None else x)
        y = leaky_relu(y, 0.2)
        if self.temporal is not None:
            v = batch_to_frames(y, batch)
            v = leaky_relu(v + self.temporal(v), 0.2)
            y = frames_to_batch(v)
        return maxpool2d(y, 2)


class FrameDiscriminator(Module):
    def __init__(self, config: DiscriminatorConfig, rng: np.random.Generator):
        self.config = config
        if config.size != 2 ** len(config.channels):
            raise ShapeMismatchError(f"size {config.size} must equal 2**{len(config.channels)} to pool down to 1x1")
        chans = (1,) + tuple(config.channels)
        self.blocks = [MultiscaleBlock(chans[i], chans[i + 1], config.kernels, rng, config.video)
                       for i in range(len(config.channels))]
        # near-zero logits at init: scores start at 0.5, away from sigmoid saturation
        self.head = Linear(chans[-1], 1, rng, gain=1e-3)

    def features(self, frames: Tensor, batch: int | None = None) -> Tensor:
        y = frames
        for blk in self.blocks:
            y = blk(y, batch)
        return y

    def forward(self, frames) -> Tensor:
        """2-D mode: (N, H, W) frames -> N scores. Video mode: (B, T, H, W) -> B scores."""
        x = frames if isinstance(frames, Tensor) else Tensor(frames)
        size = self.config.size
        if self.config.video:
            if x.ndim != 4 or x.shape[2:] != (size, size):
                raise ShapeMismatchError(f"expected clips (B, T, {size}, {size}), got {x.shape}")
            b, t = x.shape[:2]
            y = self.features(x.reshape(b * t, 1, size, size), b)
            y = y.reshape(b, t, -1).mean(axis=1)
            return sigmoid(self.head(y)).reshape(b)
        if x.ndim != 3 or x.shape[1:] != (size, size):
            raise ShapeMismatchError(f"expected frames (N, {size}, {size}), got {x.shape}")
        n = x.shape[0]
        y = self.features(x.reshape(n, 1, size, size)).reshape(n, -1)
        return sigmoid(self.head(y)).reshape(n)


def discriminate(disc: FrameDiscriminator, frames) -> Tensor:
    return disc(frames)


@dataclass
class VQConfig:
    size: int = 16
    codebook_size: int = 64
    code_dim: int = 8
    hidden: int = 32
    beta: float = 0.25


@dataclass
class VQOutput:
    reconstruction: Tensor
    indices: np.ndarray
    codebook_loss: Tensor
    commitment_loss: Tensor
    z_e: Tensor
    z_q: Tensor


class VQAutoencoder(Module):
    """Encoder to an (q, size/4, size/4) grid, nearest-codebook quantization with
    a straight-through gradient, transposed-convolution decoder."""

    def __init__(self, config: VQConfig, rng: np.random.Generator):
        self.config = config
        hid = config.hidden
        self.enc1 = Conv2d(1, hid // 2, 4, rng, stride=2, padding=1)
        self.enc2 = Conv2d(hid // 2, hid, 4, rng, stride=2, padding=1)
        self.enc3 = Conv2d(hid, config.code_dim, 1, rng, padding=0, gain=1.0)
        self.codebook = Tensor(rng.uniform(-1.0, 1.0, (config.codebook_size, config.code_dim)).astype(np.float32),
                               requires_grad=True)
        self.dec1 = Conv2d(config.code_dim, hid, 3, rng)
        self.dec2 = ConvTranspose2d(hid, hid // 2, 4, rng)
        self.dec3 = ConvTranspose2d(hid // 2, 1, 4, rng, gain=1.0)

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        s = self.config.size // 4
        return (self.config.code_dim, s, s)

    def _images(self, image) -> Tensor:
        x = image if isinstance(image, Tensor) else Tensor(image)
        s = self.config.size
        if x.ndim != 3 or x.shape[1:] != (s, s):
            raise ShapeMismatchError(f"expected images (N, {s}, {s}), got {x.shape}")
        return x.reshape(x.shape[0], 1, s, s)

    def encode(self, image) -> Tensor:
        x = self._images(image)
        return self.enc3(relu(self.enc2(relu(self.enc1(x)))))

    def nearest(self, z_e: np.ndarray) -> np.ndarray:
        """Index grid of the closest codebook vector per cell (ties -> lowest index)."""
        n, q, h, w = z_e.shape
        flat = z_e.transpose(0, 2, 3, 1).reshape(-1, q).astype(np.float64)
        book = self.codebook.data.astype(np.float64)
        d = (flat**2).sum(1, keepdims=True) - 2.0 * flat @ book.T + (book**2).sum(1)[None, :]
        idx = d.argmin(axis=1).reshape(n, h, w)
        note_branch(idx)
        return idx

    def lookup(self, indices: np.ndarray) -> Tensor:
        n, h, w = indices.shape
        rows = take_rows(self.codebook, indices.reshape(-1))
        return rows.reshape(n, h, w, self.config.code_dim).transpose(0, 3, 1, 2)

    def quantize(self, z_e: Tensor) -> tuple[Tensor, np.ndarray]:
        idx = self.nearest(z_e.data)
        return self.lookup(idx), idx

    def decode(self, z: Tensor) -> Tensor:
        y = self.dec3(relu(self.dec2(relu(self.dec1(z)))))
        n, _, s, _ = y.shape
        return sigmoid(y).reshape(n, s, s)

    def forward(self, image) -> VQOutput:
        z_e = self.encode(image)
        z_q, idx = self.quantize(z_e)
        # straight-through: forward value is z_q, gradient passes to z_e unchanged
        z_st = z_e + Tensor(z_q.data - z_e.data, dtype=z_e.dtype)
        recon = self.decode(z_st)
        codebook_loss = mse_loss(z_q, z_e.detach())
        commitment = mse_loss(z_e, z_q.detach()) * self.config.beta
        return VQOutput(recon, idx, codebook_loss, commitment, z_e, z_st)

    def embed(self, image) -> np.ndarray:
        """Quantized latent grid H (no gradient)."""
        z_e = self.encode(image)
        return self.lookup(self.nearest(z_e.data)).data


def vq_forward(vq: VQAutoencoder, image) -> VQOutput:
    return vq(image)


def architecture(model: Module) -> dict:
    cfg = asdict(model.config)
    return {"class": type(model).__name__, **{k: list(v) if isinstance(v, tuple) else v for k, v in cfg.items()}}
