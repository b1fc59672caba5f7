"""(Z, X, X*, Y, Y*) training tuples for both experiments."""

from __future__ import annotations

from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from ..errors import EmptyDatasetError
from .echo import EchoSample, stack_videos
from .glyphs import GlyphDataset
from .treatment import sample_cf_treatment

SUPERVISED = "supervised"
SEMISUPERVISED = "semisupervised"


@dataclass
class Quintuplet:
    z: np.ndarray
    x: np.ndarray | float
    x_star: np.ndarray | float
    y: np.ndarray
    y_star: np.ndarray | None


@dataclass
class Quintuplets:
    """Column-stacked quintuplets; iterating yields :class:`Quintuplet` rows."""

    z: np.ndarray
    x: np.ndarray
    x_star: np.ndarray
    y: np.ndarray
    y_star: np.ndarray | None
    source: np.ndarray
    factual_index: np.ndarray | None = None
    counterfactual_index: np.ndarray | None = None

    @property
    def supervised(self) -> bool:
        return self.y_star is not None

    def __len__(self) -> int:
        return len(self.z)

    def __iter__(self) -> Iterator[Quintuplet]:
        for i in range(len(self)):
            yield Quintuplet(self.z[i], self.x[i], self.x_star[i], self.y[i],
                             None if self.y_star is None else self.y_star[i])

    def take(self, idx) -> Quintuplets:
        idx = np.asarray(idx)
        y = self.z[idx] if self.y is self.z else self.y[idx]
        z = y if self.y is self.z else self.z[idx]
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return Quintuplets(z, self.x[idx], self.x_star[idx], y, pick(self.y_star), self.source[idx],
                           pick(self.factual_index), pick(self.counterfactual_index))

    def batches(self, batch_size: int, rng: np.random.Generator | None = None) -> Iterator[Quintuplets]:
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        for start in range(0, len(order), batch_size):
            yield self.take(order[start:start + batch_size])


def make_quintuplets(dataset, mode: str, rng: np.random.Generator,
                     embed: Callable[[np.ndarray], np.ndarray] | None = None) -> Quintuplets:
    """Supervised (glyphs): Z=[label, measurements], X=p_m, X*=p_n with m != n,
    Y/Y* the perturbed images (or their embeddings when ``embed`` is given).
    Semi-supervised (echo): Z=Y=V, X=EF, X* from :func:`sample_cf_treatment`."""
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot build quintuplets from an empty dataset")
    if mode == SUPERVISED:
        if not isinstance(dataset, GlyphDataset):
            raise TypeError("supervised quintuplets need a GlyphDataset")
        n_items, n_pert = dataset.perturbations.shape[:2]
        m = rng.integers(0, n_pert, size=n_items)
        # offset in [1, P) guarantees n != m
        n = (m + rng.integers(1, n_pert, size=n_items)) % n_pert
        rows = np.arange(n_items)
        y, y_star = dataset.perturbed[rows, m], dataset.perturbed[rows, n]
        if embed is not None:
            y, y_star = embed(y), embed(y_star)
        return Quintuplets(dataset.confounders(), dataset.perturbations[rows, m], dataset.perturbations[rows, n],
                           y, y_star, rows, m, n)
    if mode == SEMISUPERVISED:
        samples: Sequence[EchoSample] = dataset
        videos, efs = stack_videos(list(samples))
        x_star = np.array([sample_cf_treatment(float(psi), rng) for psi in efs], dtype=np.float32)
        return Quintuplets(videos, efs, x_star, videos, None, np.arange(len(samples)))
    raise ValueError(f"unknown mode {mode!r}")
