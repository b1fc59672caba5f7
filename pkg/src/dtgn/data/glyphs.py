"""Procedural digit-like glyphs with morphological perturbations.

Glyphs are drawn as thick polylines at ``UPSCALE`` times the target
resolution, perturbed there as binary masks, then box-downsampled to
grayscale. Perturbation vectors are laid out as
``[one-hot(op, 5), location x, location y, magnitude]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.morphology import skeletonize

UPSCALE = 4
OPS = ("identity", "thin", "thicken", "swell", "fracture")
N_CLASSES = 10
PERTURBATION_DIM = len(OPS) + 3
MEASUREMENT_NAMES = ("thickness", "width", "height", "slant")
CONFOUNDER_DIM = N_CLASSES + len(MEASUREMENT_NAMES)

# strokes in a unit box (x right, y down); one list of polylines per class
TEMPLATES: dict[int, list[list[tuple[float, float]]]] = {
    0: [[(0.5, 0.1), (0.78, 0.25), (0.8, 0.75), (0.5, 0.9), (0.22, 0.75), (0.2, 0.25), (0.5, 0.1)]],
    1: [[(0.35, 0.25), (0.55, 0.1), (0.55, 0.9)]],
    2: [[(0.22, 0.28), (0.45, 0.1), (0.75, 0.2), (0.7, 0.45), (0.25, 0.9), (0.8, 0.9)]],
    3: [[(0.25, 0.15), (0.7, 0.15), (0.45, 0.45), (0.75, 0.65), (0.6, 0.88), (0.22, 0.85)]],
    4: [[(0.65, 0.9), (0.65, 0.1), (0.2, 0.65), (0.82, 0.65)]],
    5: [[(0.75, 0.12), (0.3, 0.12), (0.27, 0.45), (0.65, 0.45), (0.75, 0.7), (0.55, 0.9), (0.22, 0.85)]],
    6: [[(0.7, 0.12), (0.35, 0.35), (0.25, 0.75), (0.5, 0.9), (0.75, 0.72), (0.55, 0.5), (0.28, 0.6)]],
    7: [[(0.2, 0.12), (0.8, 0.12), (0.45, 0.9)]],
    8: [[(0.5, 0.5), (0.25, 0.3), (0.5, 0.1), (0.75, 0.3), (0.5, 0.5), (0.22, 0.72), (0.5, 0.9),
         (0.78, 0.72), (0.5, 0.5)]],
    9: [[(0.72, 0.4), (0.45, 0.5), (0.25, 0.3), (0.5, 0.1), (0.72, 0.3), (0.7, 0.9)]],
}


@dataclass
class GlyphDataset:
    base: np.ndarray  # (N, S, S) float32 in [0, 1]
    labels: np.ndarray  # (N,) int
    measurements: np.ndarray  # (N, 4)
    perturbations: np.ndarray  # (N, P, 8)
    perturbed: np.ndarray  # (N, P, S, S)

    def __len__(self) -> int:
        return len(self.base)

    @property
    def size(self) -> int:
        return self.base.shape[-1]

    def confounders(self) -> np.ndarray:
        onehot = np.eye(N_CLASSES, dtype=np.float32)[self.labels]
        return np.concatenate([onehot, normalize_measurements(self.measurements, self.size)], axis=1)

    def subset(self, idx) -> GlyphDataset:
        idx = np.asarray(idx)
        return GlyphDataset(self.base[idx], self.labels[idx], self.measurements[idx],
                            self.perturbations[idx], self.perturbed[idx])

    def arrays(self) -> dict[str, np.ndarray]:
        return {"base": self.base, "labels": self.labels.astype(np.float32), "measurements": self.measurements,
                "perturbations": self.perturbations, "perturbed": self.perturbed}

    @classmethod
    def from_arrays(cls, a: dict[str, np.ndarray]) -> GlyphDataset:
        return cls(a["base"], a["labels"].astype(np.int64), a["measurements"], a["perturbations"], a["perturbed"])


def _segment_mask(shape, p0, p1, radius) -> np.ndarray:
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]] + 0.5
    d = np.asarray(p1) - np.asarray(p0)
    length2 = max(float(d @ d), 1e-12)
    t = np.clip(((xx - p0[0]) * d[0] + (yy - p0[1]) * d[1]) / length2, 0.0, 1.0)
    px, py = p0[0] + t * d[0], p0[1] + t * d[1]
    return (xx - px) ** 2 + (yy - py) ** 2 <= radius**2


def draw_glyph(label: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Binary high-resolution glyph with random jitter, scale, slant and stroke width."""
    hi = size * UPSCALE
    jitter = 0.04
    sx, sy = rng.uniform(0.7, 0.95), rng.uniform(0.75, 0.95)
    slant = rng.uniform(-0.25, 0.25)
    radius = rng.uniform(0.9, 1.5) * UPSCALE / 2 * size / 16
    mask = np.zeros((hi, hi), dtype=bool)
    for stroke in TEMPLATES[label]:
        pts = np.array(stroke) + rng.uniform(-jitter, jitter, (len(stroke), 2))
        pts = (pts - 0.5) * [sx, sy]
        pts[:, 0] += slant * pts[:, 1] * -1.0
        pts = (pts + 0.5) * hi
        for a, b in zip(pts[:-1], pts[1:]):
            mask |= _segment_mask(mask.shape, a, b, radius)
    return mask


def downsample(mask: np.ndarray, size: int) -> np.ndarray:
    f = mask.shape[0] // size
    return mask.reshape(size, f, size, f).mean(axis=(1, 3)).astype(np.float32)


def _disk(radius: int) -> np.ndarray:
    r = max(int(radius), 0)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return xx**2 + yy**2 <= r * r + r


def apply_perturbation(mask: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Apply an encoded perturbation to a binary high-resolution glyph."""
    op = OPS[int(np.argmax(p[:len(OPS)]))]
    hi = mask.shape[0]
    loc = np.array([p[len(OPS)], p[len(OPS) + 1]]) * hi
    mag = float(p[len(OPS) + 2])
    if op == "identity":
        return mask.copy()
    if op == "thicken":
        return ndimage.binary_dilation(mask, _disk(round(mag * UPSCALE / 2)))
    if op == "thin":
        r = round(mag * UPSCALE / 2)
        while r > 0:
            out = ndimage.binary_erosion(mask, _disk(r))
            # keep at least a third of the ink
            if out.sum() >= mask.sum() / 3:
                return out
            r -= 1
        return mask.copy()
    if op == "swell":
        radius = hi * 0.3
        yy, xx = np.mgrid[0:hi, 0:hi] + 0.5
        dx, dy = xx - loc[0], yy - loc[1]
        d = np.sqrt(dx**2 + dy**2) / radius
        # inside the disk sample from nearer the centre: local magnification
        scale = np.where(d < 1.0, np.power(np.maximum(d, 1e-9), mag), 1.0)
        src_x = np.clip(loc[0] + dx * scale, 0, hi - 1).astype(int)
        src_y = np.clip(loc[1] + dy * scale, 0, hi - 1).astype(int)
        return mask[src_y, src_x]
    if op == "fracture":
        yy, xx = np.mgrid[0:hi, 0:hi] + 0.5
        gap = (xx - loc[0]) ** 2 + (yy - loc[1]) ** 2 <= (mag * UPSCALE) ** 2
        return mask & ~gap
    raise ValueError(f"unknown perturbation {op!r}")


def sample_perturbation(op: str, mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    p = np.zeros(PERTURBATION_DIM, dtype=np.float32)
    p[OPS.index(op)] = 1.0
    if op in ("swell", "fracture"):
        ys, xs = np.nonzero(mask)
        k = int(rng.integers(len(xs)))
        p[len(OPS)] = (xs[k] + 0.5) / mask.shape[1]
        p[len(OPS) + 1] = (ys[k] + 0.5) / mask.shape[0]
    magnitude = {"identity": 0.0, "thin": rng.uniform(0.5, 1.5), "thicken": rng.uniform(0.5, 2.0),
                 "swell": rng.uniform(0.5, 0.8), "fracture": rng.uniform(0.8, 1.5)}[op]
    p[len(OPS) + 2] = magnitude
    return p


def measure(image: np.ndarray) -> np.ndarray:
    """(thickness, width, height, slant) of the ink (pixels above 0.5).

    Thickness is ink area over skeleton length; slant is the horizontal shear
    of the ink's second moments (positive leans right).
    """
    ink = np.asarray(image) > 0.5
    if not ink.any():
        return np.zeros(4, dtype=np.float32)
    skel = skeletonize(ink).sum()
    thickness = ink.sum() / max(skel, 1)
    ys, xs = np.nonzero(ink)
    width = xs.max() - xs.min() + 1
    height = ys.max() - ys.min() + 1
    xc, yc = xs - xs.mean(), ys - ys.mean()
    myy = float((yc * yc).mean())
    slant = float(-(xc * yc).mean() / myy) if myy > 0 else 0.0
    return np.array([thickness, width, height, slant], dtype=np.float32)


def normalize_measurements(m: np.ndarray, size: int) -> np.ndarray:
    m = np.asarray(m, dtype=np.float32)
    scale = np.array([0.25, 1.0 / size, 1.0 / size, 1.0], dtype=np.float32)
    return m * scale


def gen_morpho_dataset(count: int, perturbations_per_image: int, rng: np.random.Generator,
                       size: int = 16) -> GlyphDataset:
    """Base glyphs, their measurements, and ``perturbations_per_image``
    perturbed versions each. Slot 0 is always the identity perturbation; the
    remaining slots cycle through the four non-identity operations."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if perturbations_per_image < 2:
        raise ValueError("need at least two perturbations per image")
    base = np.empty((count, size, size), dtype=np.float32)
    labels = np.empty(count, dtype=np.int64)
    meas = np.empty((count, 4), dtype=np.float32)
    pert = np.empty((count, perturbations_per_image, PERTURBATION_DIM), dtype=np.float32)
    images = np.empty((count, perturbations_per_image, size, size), dtype=np.float32)
    for i in range(count):
        label = int(rng.integers(N_CLASSES))
        mask = draw_glyph(label, size, rng)
        labels[i] = label
        base[i] = downsample(mask, size)
        meas[i] = measure(base[i])
        start = int(rng.integers(4))
        for j in range(perturbations_per_image):
            op = "identity" if j == 0 else OPS[1 + (start + j - 1) % 4]
            p = sample_perturbation(op, mask, rng)
            pert[i, j] = p
            images[i, j] = downsample(apply_perturbation(mask, p), size)
    return GlyphDataset(base, labels, meas, pert, images)
