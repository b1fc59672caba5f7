"""Training loops: expert and VQ pretraining, supervised twin training on
glyph embeddings, and the scheduled three-loss semi-supervised twin GAN.

Every loop draws its randomness from counter-based streams keyed by
(seed, component, epoch), so a run resumed from an epoch checkpoint continues
exactly as an uninterrupted run would.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data.echo import EchoSample, stack_videos
from .data.glyphs import GlyphDataset
from .data.quintuplets import SEMISUPERVISED, SUPERVISED, make_quintuplets
from .errors import ConfigError, EmptyDatasetError, MissingCounterfactualLabelError, MissingExpertError
from .metrics import regression_metrics, ssim_per_item
from .nn.layers import Module
from .nn.models import (
    DiscriminatorConfig,
    EmbeddingGenerator,
    EmbeddingGeneratorConfig,
    ExpertConfig,
    ExpertRegressor,
    FrameDiscriminator,
    VideoGenerator,
    VideoGeneratorConfig,
    VQAutoencoder,
    VQConfig,
    architecture,
)
from .nn.noise import sample_noise
from .tensor import Adam, Tensor, backward, l1_loss, load, mse_loss, no_grad, save, stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossSchedule:
    reconstruction_weight: float = 1.0
    discriminator_weight: float = 3.0
    expert_weight: float = 1.0
    discriminator_start_epoch: int = 3
    expert_start_epoch: int = 5

    def __post_init__(self):
        if min(self.reconstruction_weight, self.discriminator_weight, self.expert_weight) < 0:
            raise ConfigError("loss weights must be >= 0")
        if min(self.discriminator_start_epoch, self.expert_start_epoch) < 0:
            raise ConfigError("loss start epochs must be >= 0")


def loss_schedule_at(schedule: LossSchedule, epoch: int) -> tuple[float, float, float]:
    """Active (reconstruction, adversarial, expert) weights at a 0-based epoch."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    adv = schedule.discriminator_weight if epoch >= schedule.discriminator_start_epoch else 0.0
    exp = schedule.expert_weight if epoch >= schedule.expert_start_epoch else 0.0
    return (schedule.reconstruction_weight, adv, exp)


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 8
    lr_generator: float = 1e-4
    lr_discriminator: float = 1e-4
    lr_expert: float = 1e-3
    seed: int = 0
    resolution: int = 32
    frames: int = 8
    no_adversarial: bool = False
    no_expert: bool = False
    conditional_only: bool = False
    noise_variance: float = 0.25
    # frames per clip shown to the per-frame discriminator each step
    disc_frames: int = 2
    video_discriminator: bool = False
    generator_channels: tuple[int, int] = (16, 32)
    generator_skip: bool = True
    expert_channels: tuple[int, int, int, int] = (8, 16, 32, 32)
    disc_channels: tuple[int, ...] = (8, 16, 16, 32, 32)
    schedule: LossSchedule = field(default_factory=LossSchedule)

    def __post_init__(self):
        for name in ("epochs", "batch_size", "resolution", "frames", "disc_frames"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("lr_generator", "lr_discriminator", "lr_expert", "noise_variance"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if isinstance(self.schedule, dict):
            self.schedule = LossSchedule(**self.schedule)
        for name in ("generator_channels", "expert_channels", "disc_channels"):
            setattr(self, name, tuple(getattr(self, name)))

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainResult:
    model: Module
    history: list[dict]
    checkpoint: Path | None = None
    extra: dict = field(default_factory=dict)


# shared plumbing


def _write_log(path: Path | None, record: dict, fresh: bool) -> None:
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w" if fresh else "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def _round(d: dict) -> dict:
    return {k: (round(float(v), 8) if isinstance(v, (float, np.floating)) else v) for k, v in d.items()}


def _prefixed(prefix: str, arrays: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {prefix + k: v for k, v in arrays.items()}


def _resume_state(out: Path | None, resume: bool, kind: str):
    if not (resume and out is not None and out.exists()):
        return None
    arrays, meta = load(out)
    if meta.get("kind") != kind:
        raise ConfigError(f"{out} holds a {meta.get('kind')!r} checkpoint, not {kind!r}")
    return arrays, meta


def _split_echo(samples: list[EchoSample]) -> tuple[list[EchoSample], list[EchoSample]]:
    train = [s for s in samples if s.split == "train"]
    val = [s for s in samples if s.split == "val"]
    if not train:
        raise EmptyDatasetError("no training clips")
    if not val:
        # no labelled validation split: hold out the last eighth
        k = max(1, len(train) // 8)
        train, val = train[:-k], train[-k:]
    return train, val


def _batch_indices(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _predict(model, inputs: np.ndarray, batch_size: int = 32) -> np.ndarray:
    with no_grad():
        return np.concatenate([model(inputs[i:i + batch_size]).data for i in range(0, len(inputs), batch_size)])


# expert


def build_expert(config: TrainConfig, seed: int | None = None) -> ExpertRegressor:
    cfg = ExpertConfig(frames=config.frames, size=config.resolution, channels=config.expert_channels)
    return ExpertRegressor(cfg, stream(config.seed if seed is None else seed, "expert-init"))


def train_expert(config: TrainConfig, samples: list[EchoSample], out: str | Path | None = None,
                 log_path: str | Path | None = None, resume: bool = False) -> TrainResult:
    """L1 regression of EF; the saved weights are those of the best validation epoch."""
    if not samples:
        raise EmptyDatasetError("expert training needs labelled clips")
    out = Path(out) if out else None
    log_path = Path(log_path) if log_path else None
    train, val = _split_echo(samples)
    xv, yv = stack_videos(train)
    xval, yval = stack_videos(val)
    model = build_expert(config)
    opt = Adam(model.parameters(), lr=config.lr_expert)
    best = {"mae": np.inf, "epoch": -1, "state": model.state_dict()}
    history: list[dict] = []
    start = 0
    state = _resume_state(out, resume, "expert")
    if state is not None:
        arrays, meta = state
        model.load_state_dict(arrays, "last.")
        opt.load_state_arrays("opt", arrays)
        best = {"mae": meta["best_val_mae"], "epoch": meta["best_epoch"],
                "state": {k[len("model."):]: v for k, v in arrays.items() if k.startswith("model.")}}
        history = meta["history"]
        start = meta["epoch"] + 1
    for epoch in range(start, config.epochs):
        rng = stream(config.seed, "expert-epoch", epoch)
        losses = []
        for idx in _batch_indices(len(xv), config.batch_size, rng):
            loss = l1_loss(model(xv[idx]), Tensor(yv[idx]))
            opt.zero_grad()
            backward(loss, opt.params)
            opt.step()
            losses.append(loss.item())
        pred = _predict(model, xval)
        metrics = regression_metrics(pred, yval)
        if metrics["MAE"] < best["mae"]:
            best = {"mae": metrics["MAE"], "epoch": epoch, "state": model.state_dict()}
        record = _round({"epoch": epoch, "train_l1": float(np.mean(losses)), "val_MAE": metrics["MAE"],
                         "val_R2": metrics["R2"], "val_RMSE": metrics["RMSE"]})
        history.append(record)
        _write_log(log_path, record, fresh=epoch == 0)
        log.info("expert epoch %d: %s", epoch, record)
        if out is not None:
            meta = {"kind": "expert", "epoch": epoch, "best_epoch": best["epoch"], "best_val_mae": best["mae"],
                    "architecture": architecture(model), "config": config.to_dict(), "history": history}
            save(out, {**_prefixed("model.", best["state"]), **_prefixed("last.", model.state_dict()),
                       **opt.state_arrays("opt")}, meta)
    model.load_state_dict(best["state"])
    return TrainResult(model, history, out, {"best_epoch": best["epoch"], "best_val_mae": best["mae"]})


def load_expert(path: str | Path) -> ExpertRegressor:
    arrays, meta = load(path)
    arch = meta["architecture"]
    cfg = ExpertConfig(frames=arch["frames"], size=arch["size"], channels=tuple(arch["channels"]),
                       hidden=arch["hidden"])
    model = ExpertRegressor(cfg, np.random.default_rng(0))
    model.load_state_dict(arrays, "model.")
    return model


# VQ autoencoder


def train_vq(config: TrainConfig, dataset: GlyphDataset, out: str | Path | None = None,
             log_path: str | Path | None = None, resume: bool = False,
             vq_config: VQConfig | None = None) -> TrainResult:
    """Reconstruction + codebook + commitment objective on every perturbed image."""
    if len(dataset) == 0:
        raise EmptyDatasetError("VQ training needs images")
    out = Path(out) if out else None
    log_path = Path(log_path) if log_path else None
    vq_config = vq_config or VQConfig(size=dataset.size)
    images = dataset.perturbed.reshape(-1, dataset.size, dataset.size)
    n_val = max(1, len(images) // 10)
    train, val = images[:-n_val], images[-n_val:]
    model = VQAutoencoder(vq_config, stream(config.seed, "vq-init"))
    opt = Adam(model.parameters(), lr=config.lr_generator)
    history: list[dict] = []
    start = 0
    state = _resume_state(out, resume, "vq")
    if state is not None:
        arrays, meta = state
        model.load_state_dict(arrays, "model.")
        opt.load_state_arrays("opt", arrays)
        history, start = meta["history"], meta["epoch"] + 1
    for epoch in range(start, config.epochs):
        rng = stream(config.seed, "vq-epoch", epoch)
        parts = {"recon": [], "codebook": [], "commitment": []}
        for idx in _batch_indices(len(train), config.batch_size, rng):
            o = model(train[idx])
            rec = mse_loss(o.reconstruction, Tensor(train[idx]))
            loss = rec + o.codebook_loss + o.commitment_loss
            opt.zero_grad()
            backward(loss, opt.params)
            opt.step()
            parts["recon"].append(rec.item())
            parts["codebook"].append(o.codebook_loss.item())
            parts["commitment"].append(o.commitment_loss.item())
        with no_grad():
            vo = model(val)
        record = _round({"epoch": epoch, **{k: float(np.mean(v)) for k, v in parts.items()},
                         "val_ssim": float(ssim_per_item(vo.reconstruction.data, val).mean()),
                         "val_codes_used": int(len(np.unique(vo.indices)))})
        history.append(record)
        _write_log(log_path, record, fresh=epoch == 0)
        log.info("vq epoch %d: %s", epoch, record)
        if out is not None:
            meta = {"kind": "vq", "epoch": epoch, "architecture": architecture(model),
                    "config": config.to_dict(), "history": history}
            save(out, {**_prefixed("model.", model.state_dict()), **opt.state_arrays("opt")}, meta)
    return TrainResult(model, history, out)


def load_vq(path: str | Path) -> VQAutoencoder:
    arrays, meta = load(path)
    arch = meta["architecture"]
    model = VQAutoencoder(VQConfig(**{k: arch[k] for k in ("size", "codebook_size", "code_dim", "hidden", "beta")}),
                          np.random.default_rng(0))
    model.load_state_dict(arrays, "model.")
    return model


def embed_images(vq: VQAutoencoder, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    flat = images.reshape(-1, *images.shape[-2:])
    with no_grad():
        out = np.concatenate([vq.embed(flat[i:i + batch_size]) for i in range(0, len(flat), batch_size)])
    return out.reshape(images.shape[:-2] + out.shape[1:])


# supervised twin (glyph embeddings)


def build_embedding_generator(config: TrainConfig, latent_shape, hidden: int = 128) -> EmbeddingGenerator:
    cfg = EmbeddingGeneratorConfig(hidden=hidden, out_shape=tuple(latent_shape))
    return EmbeddingGenerator(cfg, stream(config.seed, "twin-supervised-init"))


def glyph_split(dataset: GlyphDataset, test_fraction: float = 0.1) -> tuple[GlyphDataset, GlyphDataset]:
    n_test = max(1, int(round(len(dataset) * test_fraction)))
    idx = np.arange(len(dataset))
    return dataset.subset(idx[:-n_test]), dataset.subset(idx[-n_test:])


def train_twin_supervised(config: TrainConfig, dataset: GlyphDataset, vq: VQAutoencoder,
                          out: str | Path | None = None, log_path: str | Path | None = None,
                          resume: bool = False, hidden: int = 128) -> TrainResult:
    """Both branches regress VQ embeddings (MSE) under one shared noise draw.

    Quintuplets (which perturbation is factual, which counterfactual) are
    redrawn every epoch; the frozen VQ encoder supplies the targets.
    """
    if not isinstance(dataset, GlyphDataset):
        raise MissingCounterfactualLabelError("supervised twin training needs counterfactual labels (glyph data)")
    if len(dataset) == 0:
        raise EmptyDatasetError("no glyphs")
    out = Path(out) if out else None
    log_path = Path(log_path) if log_path else None
    vq.freeze()
    targets = embed_images(vq, dataset.perturbed)  # (N, P, q, h, w)
    gen = build_embedding_generator(config, vq.latent_shape, hidden)
    opt = Adam(gen.parameters(), lr=config.lr_generator)
    history: list[dict] = []
    start = 0
    state = _resume_state(out, resume, "twin-supervised")
    if state is not None:
        arrays, meta = state
        gen.load_state_dict(arrays, "generator.")
        opt.load_state_arrays("opt/g", arrays)
        history, start = meta["history"], meta["epoch"] + 1
    rows = np.arange(len(dataset))
    for epoch in range(start, config.epochs):
        rng = stream(config.seed, "twin-supervised-epoch", epoch)
        q = make_quintuplets(dataset, SUPERVISED, rng)
        h, h_star = targets[rows, q.factual_index], targets[rows, q.counterfactual_index]
        f_losses, cf_losses = [], []
        for idx in _batch_indices(len(q), config.batch_size, rng):
            u = sample_noise(rng, gen.noise_shape(len(idx)), config.noise_variance)
            y = gen(q.z[idx], q.x[idx], u)
            y_star = gen(q.z[idx], q.x_star[idx], u)
            lf = mse_loss(y, Tensor(h[idx]))
            lcf = mse_loss(y_star, Tensor(h_star[idx]))
            opt.zero_grad()
            backward(lf + lcf, opt.params)
            opt.step()
            f_losses.append(lf.item())
            cf_losses.append(lcf.item())
        record = _round({"epoch": epoch, "factual_mse": float(np.mean(f_losses)),
                         "counterfactual_mse": float(np.mean(cf_losses))})
        history.append(record)
        _write_log(log_path, record, fresh=epoch == 0)
        log.info("twin-supervised epoch %d: %s", epoch, record)
        if out is not None:
            meta = {"kind": "twin-supervised", "epoch": epoch, "architecture": architecture(gen),
                    "config": config.to_dict(), "history": history}
            save(out, {**_prefixed("generator.", gen.state_dict()), **opt.state_arrays("opt/g")}, meta)
    return TrainResult(gen, history, out)


def load_embedding_generator(path: str | Path) -> EmbeddingGenerator:
    arrays, meta = load(path)
    arch = meta["architecture"]
    cfg = EmbeddingGeneratorConfig(arch["confounder_dim"], arch["treatment_dim"], arch["hidden"],
                                   tuple(arch["out_shape"]))
    gen = EmbeddingGenerator(cfg, np.random.default_rng(0))
    gen.load_state_dict(arrays, "generator.")
    return gen


# semi-supervised twin GAN (echo)


def build_video_generator(config: TrainConfig) -> VideoGenerator:
    cfg = VideoGeneratorConfig(frames=config.frames, size=config.resolution, channels=config.generator_channels,
                               skip=config.generator_skip)
    return VideoGenerator(cfg, stream(config.seed, "twin-generator-init"))


def build_discriminator(config: TrainConfig) -> FrameDiscriminator:
    cfg = DiscriminatorConfig(size=config.resolution, frames=config.frames, channels=config.disc_channels,
                              video=config.video_discriminator)
    return FrameDiscriminator(cfg, stream(config.seed, "twin-discriminator-init"))


def effective_weights(config: TrainConfig, epoch: int) -> tuple[float, float, float]:
    w_rec, w_adv, w_exp = loss_schedule_at(config.schedule, epoch)
    if config.no_adversarial:
        w_adv = 0.0
    if config.no_expert:
        w_exp = 0.0
    return w_rec, w_adv, w_exp


def _full(like: Tensor, value: float) -> Tensor:
    return Tensor(np.full(like.shape, value, dtype=like.dtype))


def _disc_input(video, frame_idx: np.ndarray | None, video_mode: bool):
    """Clips for the video discriminator; selected frames, flattened, otherwise."""
    if video_mode:
        return video
    b, t, h, w = video.shape
    flat = (frame_idx + np.arange(b)[:, None] * t).reshape(-1)
    return video.reshape(b * t, h, w)[flat]


def train_twin_semisupervised(config: TrainConfig, samples: list[EchoSample], expert: ExpertRegressor | None,
                              out: str | Path | None = None, log_path: str | Path | None = None,
                              resume: bool = False) -> TrainResult:
    """Scheduled three-loss training of the twin video generator.

    Each step: reconstruction L1(Y_hat, V); once active, one discriminator
    update (real = V frames, fake = counterfactual frames, L1 to 1/0) followed
    by the generator update whose adversarial term pushes the discriminator
    toward 1 on the counterfactual output; once active, L1 between the frozen
    expert's reading of the counterfactual output and X*. With
    ``conditional_only`` the counterfactual branch is dropped and the
    adversarial and expert terms act on the factual output instead.
    """
    if expert is None:
        raise MissingExpertError("semi-supervised twin training needs a trained expert")
    if not samples:
        raise EmptyDatasetError("no clips")
    out = Path(out) if out else None
    log_path = Path(log_path) if log_path else None
    train = [s for s in samples if s.split == "train"] or list(samples)
    expert.freeze()
    gen = build_video_generator(config)
    disc = build_discriminator(config)
    opt_g = Adam(gen.parameters(), lr=config.lr_generator, betas=(0.5, 0.999))
    opt_d = Adam(disc.parameters(), lr=config.lr_discriminator, betas=(0.5, 0.999))
    history: list[dict] = []
    start = 0
    state = _resume_state(out, resume, "twin")
    if state is not None:
        arrays, meta = state
        gen.load_state_dict(arrays, "generator.")
        disc.load_state_dict(arrays, "discriminator.")
        opt_g.load_state_arrays("opt/g", arrays)
        opt_d.load_state_arrays("opt/d", arrays)
        history, start = meta["history"], meta["epoch"] + 1
    for epoch in range(start, config.epochs):
        rng = stream(config.seed, "twin-epoch", epoch)
        q = make_quintuplets(train, SEMISUPERVISED, rng)
        w_rec, w_adv, w_exp = effective_weights(config, epoch)
        sums = {"reconstruction": 0.0, "adversarial": 0.0, "expert": 0.0, "discriminator": 0.0}
        d_updates = g_updates = steps = 0
        for idx in _batch_indices(len(q), config.batch_size, rng):
            b = len(idx)
            v = q.z[idx]
            u = sample_noise(rng, gen.noise_shape(b), config.noise_variance)
            y_hat = gen(v, q.x[idx], u)
            if config.conditional_only:
                target, target_x = y_hat, q.x[idx]
            else:
                target, target_x = gen(v, q.x_star[idx], u), q.x_star[idx]
            rec = l1_loss(y_hat, Tensor(v))
            total = rec * w_rec
            frame_idx = rng.integers(0, config.frames, size=(b, config.disc_frames))
            if w_adv > 0:
                real = _disc_input(v, frame_idx, config.video_discriminator)
                fake = _disc_input(target.data, frame_idx, config.video_discriminator)
                d_real, d_fake = disc(real), disc(fake)
                d_loss = (l1_loss(d_real, _full(d_real, 1.0))
                          + l1_loss(d_fake, _full(d_fake, 0.0))) * 0.5
                opt_d.zero_grad()
                backward(d_loss, opt_d.params)
                opt_d.step()
                d_updates += 1
                sums["discriminator"] += d_loss.item()
                d_gen = disc(_disc_input(target, frame_idx, config.video_discriminator))
                adv = l1_loss(d_gen, _full(d_gen, 1.0))
                total = total + adv * w_adv
                sums["adversarial"] += adv.item()
            if w_exp > 0:
                ex = l1_loss(expert(target), Tensor(np.asarray(target_x, dtype=np.float32)))
                total = total + ex * w_exp
                sums["expert"] += ex.item()
            opt_g.zero_grad()
            backward(total, opt_g.params)
            opt_g.step()
            g_updates += 1
            steps += 1
            sums["reconstruction"] += rec.item()
        record = _round({"epoch": epoch, "w_reconstruction": w_rec, "w_adversarial": w_adv, "w_expert": w_exp,
                         **{f"loss_{k}": s / max(steps, 1) for k, s in sums.items()},
                         "steps": steps, "d_updates": d_updates, "g_updates": g_updates})
        history.append(record)
        _write_log(log_path, record, fresh=epoch == 0)
        log.info("twin epoch %d: %s", epoch, record)
        if out is not None:
            meta = {"kind": "twin", "epoch": epoch, "architecture": architecture(gen),
                    "discriminator": architecture(disc), "config": config.to_dict(), "history": history}
            save(out, {**_prefixed("generator.", gen.state_dict()), **_prefixed("discriminator.", disc.state_dict()),
                       **opt_g.state_arrays("opt/g"), **opt_d.state_arrays("opt/d")}, meta)
    return TrainResult(gen, history, out, {"discriminator": disc})


def load_video_generator(path: str | Path) -> VideoGenerator:
    arrays, meta = load(path)
    arch = meta["architecture"]
    gen = VideoGenerator(VideoGeneratorConfig(arch["frames"], arch["size"], tuple(arch["channels"]), arch["skip"]),
                         np.random.default_rng(0))
    gen.load_state_dict(arrays, "generator.")
    return gen


__all__ = [
    "LossSchedule", "TrainConfig", "TrainResult", "build_discriminator", "build_expert",
    "build_video_generator", "effective_weights", "embed_images", "glyph_split", "load_embedding_generator",
    "load_expert", "load_video_generator", "load_vq", "loss_schedule_at", "train_expert",
    "train_twin_semisupervised", "train_twin_supervised", "train_vq",
]
