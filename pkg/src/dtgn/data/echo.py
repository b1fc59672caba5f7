"""Pulsating-ellipse analog of apical echocardiogram clips.

Each clip shows a dark chamber on speckled tissue. The chamber area follows
``A(t) = A_ED * (1 - ef * c(t))`` where ``c`` is a raised-cosine cycle with
flat dwells at end-diastole (c=0) and end-systole (c=1), so the stored label
equals ``(max area - min area) / max area`` of the analytic area sequence.
Everything except the ejection fraction is drawn from the anatomy seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import InvalidEFError
from ..tensor.rng import stream

EF_MIN, EF_MAX = 0.05, 0.95
# fraction of a cycle spent at each extreme; transitions take the rest
DWELL = 0.3
BLOOD = 0.08


@dataclass
class EchoSample:
    video: np.ndarray
    ef: float
    anatomy_seed: int
    heart_rate: int
    video_id: str = ""
    split: str = "train"
    fps: float = 32.0
    areas: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class Anatomy:
    center: tuple[float, float]
    axes: tuple[float, float]
    angle: float
    heart_rate: int
    tissue: np.ndarray


def cycle_curve(frames: int, heart_rate: int) -> np.ndarray:
    """Contraction profile ``c(t)`` in [0, 1], hitting 0 and 1 on whole frames.

    Phase is shifted so the first end-diastolic dwell is centred on frame 1.
    """
    per_cycle = frames / heart_rate
    phase = (np.arange(frames) - 1) / per_cycle % 1.0
    # distance from the ED dwell centre (phase 0) in cycle units, in [0, 0.5]
    d = np.minimum(phase, 1.0 - phase)
    lo, hi = DWELL / 2, 0.5 - DWELL / 2
    ramp = np.clip((d - lo) / (hi - lo), 0.0, 1.0)
    return 0.5 - 0.5 * np.cos(np.pi * ramp)


def area_curve(ef: float, ed_area: float, frames: int, heart_rate: int) -> np.ndarray:
    return ed_area * (1.0 - ef * cycle_curve(frames, heart_rate))


def make_anatomy(seed: int, size: int, frames: int) -> Anatomy:
    rng = stream(seed, "echo-anatomy")
    # cycles need >= 8 frames each so both dwells cover three frames
    heart_rate = int(rng.integers(1, frames // 8 + 1)) if frames >= 16 else 1
    cx = size * (0.5 + rng.uniform(-0.08, 0.08))
    cy = size * (0.45 + rng.uniform(-0.08, 0.08))
    major = size * rng.uniform(0.28, 0.36)
    minor = major * rng.uniform(0.6, 0.85)
    angle = rng.uniform(-0.5, 0.5)
    # speckle: spatially correlated Rayleigh field, unit mean
    speckle = gaussian_filter(rng.rayleigh(1.0, (size, size)), 0.7)
    speckle /= speckle.mean()
    texture = 1.0 + 0.45 * (speckle - 1.0)
    shading = gaussian_filter(rng.normal(0.0, 1.0, (size, size)), size / 8)
    shading /= max(np.abs(shading).max(), 1e-9)
    tissue = (0.62 + 0.12 * shading) * texture
    return Anatomy((cx, cy), (major, minor), angle, heart_rate, tissue)


def render_echo(anatomy_seed: int, ef: float, frames: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(video, analytic chamber areas)``; video is float32 in [0, 1]."""
    if not EF_MIN < ef < EF_MAX:
        raise InvalidEFError(f"ejection fraction {ef} outside ({EF_MIN}, {EF_MAX})")
    an = make_anatomy(anatomy_seed, size, frames)
    ed_area = np.pi * an.axes[0] * an.axes[1]
    areas = area_curve(ef, ed_area, frames, an.heart_rate)
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    dx, dy = xx - an.center[0], yy - an.center[1]
    ca, sa = np.cos(an.angle), np.sin(an.angle)
    u, v = ca * dx + sa * dy, -sa * dx + ca * dy
    video = np.empty((frames, size, size), dtype=np.float32)
    for t in range(frames):
        s = np.sqrt(areas[t] / ed_area)
        a, b = an.axes[0] * s, an.axes[1] * s
        r = np.sqrt((u / a) ** 2 + (v / b) ** 2)
        # approximate signed distance to the boundary in pixels -> partial coverage
        cover = np.clip(0.5 - (r - 1.0) * np.sqrt(a * b), 0.0, 1.0)
        frame = an.tissue * (1.0 - cover) + BLOOD * (1.0 - 0.3 + 0.3 * an.tissue) * cover
        video[t] = np.clip(frame, 0.0, 1.0)
    return video, areas


def gen_echo_dataset(count: int, frames: int, size: int, rng: np.random.Generator,
                     ef_range: tuple[float, float] = (0.1, 0.9),
                     split_fractions: tuple[float, float] = (0.75, 0.125)) -> list[EchoSample]:
    """Synthetic clips with uniformly drawn EF and fresh anatomy per clip.

    Splits are assigned by position: the first ``train`` fraction, then ``val``,
    then ``test``.
    """
    if frames < 8:
        raise ValueError(f"need at least 8 frames, got {frames}")
    if count < 1:
        raise ValueError("count must be >= 1")
    n_train = int(round(count * split_fractions[0]))
    n_val = int(round(count * split_fractions[1]))
    out = []
    for i in range(count):
        seed = int(rng.integers(0, 2**31 - 1))
        ef = float(rng.uniform(*ef_range))
        video, areas = render_echo(seed, ef, frames, size)
        split = "train" if i < n_train else "val" if i < n_train + n_val else "test"
        out.append(EchoSample(video, ef, seed, make_anatomy(seed, size, frames).heart_rate,
                              video_id=f"echo_{i:05d}", split=split, fps=frames / 2.0, areas=areas))
    return out


def stack_videos(samples: list[EchoSample]) -> tuple[np.ndarray, np.ndarray]:
    return (np.stack([s.video for s in samples]).astype(np.float32),
            np.array([s.ef for s in samples], dtype=np.float32))
