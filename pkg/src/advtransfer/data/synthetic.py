"""Desk-scale synthetic stand-ins for the traffic datasets.

Each class has a mean feature vector; a sample is that mean plus Gaussian
noise, clipped to [0,1] and tiled into a patch with the tabular layout. The two
class means differ by ``class_separation`` in every feature, so with zero noise
a nearest-centroid rule is exact.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import rng as rngmod
from .dataset import Dataset, split_indices
from .ingest import features_to_patch


@dataclass(frozen=True)
class SyntheticSpec:
    n_per_class: int = 500
    class_separation: float = 0.2
    noise_sigma: float = 0.1
    seed: int = 0
    feature_dim: int = 115

    def __post_init__(self):
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be >= 1")
        if not self.class_separation > 0:
            raise ValueError("class_separation must be > 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 1 <= self.feature_dim <= 4096:
            raise ValueError("feature_dim must be in [1, 4096]")

    def to_dict(self) -> dict:
        return asdict(self)


def class_means(spec: SyntheticSpec) -> np.ndarray:
    """[2, F] per-class mean feature vectors."""
    gen = rngmod.stream(spec.seed, "pattern")
    half = min(spec.class_separation, 1.0) / 2
    base = gen.uniform(half, 1.0 - half, spec.feature_dim)
    sign = gen.choice([-1.0, 1.0], spec.feature_dim)
    return np.stack([base - half * sign, base + half * sign])


def generate_synthetic(spec: SyntheticSpec, ratios=(0.6, 0.2, 0.2)) -> Dataset:
    means = class_means(spec)
    gen = rngmod.stream(spec.seed, "noise")
    n = spec.n_per_class
    labels = np.repeat([0, 1], n)
    feats = means[labels] + spec.noise_sigma * gen.standard_normal((2 * n, spec.feature_dim))
    feats = np.clip(feats, 0.0, 1.0)
    patches = np.stack([features_to_patch(f) for f in feats])
    ids = [f"synthetic:{spec.seed}:{i}" for i in range(2 * n)]
    splits = split_indices(labels, ratios, spec.seed)
    return Dataset(patches, labels, ids, splits, "synthetic", meta={"synthetic": spec.to_dict()})
