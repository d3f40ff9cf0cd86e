"""Seeded synthetic dataset generator for desk-scale experiments.

Recipe: class centroids are drawn in image space; training and test
samples are centroid plus isotropic Gaussian noise; each semantic source
is a random linear map of the centroids plus its own noise.  Every draw
flows from one seeded generator, and the parameters are written to a
manifest so a directory can be regenerated byte for byte.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, save_dataset
from .params import DEFAULT_SEED


@dataclass(frozen=True)
class SynthParams:
    n_seen: int = 6
    n_unseen: int = 3
    feature_dim: int = 12
    source_dims: tuple[int, ...] = (8,)
    source_names: tuple[str, ...] | None = None  # defaults to src0, src1, ...
    train_per_class: int = 20
    test_per_class: int = 20
    centroid_scale: float = 3.0
    image_noise: float = 0.5
    semantic_noise: float | tuple[float, ...] = 0.0
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if min(self.n_seen, self.n_unseen, self.feature_dim) < 1:
            raise ValueError("class counts and dimensions must be at least 1")
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise ValueError("per-class sample counts must be at least 1")
        if self.source_names is not None and len(self.source_names) != len(self.source_dims):
            raise ValueError("source_names must match source_dims in length")

    @property
    def names(self) -> tuple[str, ...]:
        if self.source_names is not None:
            return tuple(self.source_names)
        return tuple(f"src{i}" for i in range(len(self.source_dims)))

    def noise_for_source(self, i: int) -> float:
        if isinstance(self.semantic_noise, tuple):
            return self.semantic_noise[i]
        return float(self.semantic_noise)


def generate_dataset(params: SynthParams) -> Dataset:
    """Draw a dataset; identical params give an identical dataset."""
    rng = np.random.default_rng(params.seed)
    n_classes = params.n_seen + params.n_unseen
    dim = params.feature_dim
    centroids = rng.normal(size=(n_classes, dim)) * params.centroid_scale

    seen = tuple(range(params.n_seen))
    unseen = tuple(range(params.n_seen, n_classes))

    rows, labels, truth = [], [], []
    for c in seen:
        noise = rng.normal(size=(params.train_per_class, dim)) * params.image_noise
        rows.append(centroids[c] + noise)
        labels.extend([c] * params.train_per_class)
        truth.extend([c] * params.train_per_class)
    for c in unseen:
        noise = rng.normal(size=(params.test_per_class, dim)) * params.image_noise
        rows.append(centroids[c] + noise)
        labels.extend([-1] * params.test_per_class)
        truth.extend([c] * params.test_per_class)

    sources = {}
    for i, (name, d_src) in enumerate(zip(params.names, params.source_dims)):
        # scaled so embedding magnitudes track centroid magnitudes
        proj = rng.normal(size=(d_src, dim)) / np.sqrt(dim)
        table = centroids @ proj.T
        table += rng.normal(size=table.shape) * params.noise_for_source(i)
        sources[name] = table

    return Dataset(
        features=np.vstack(rows),
        labels=np.array(labels),
        seen_classes=seen,
        unseen_classes=unseen,
        semantic_sources=sources,
        labels_true=np.array(truth),
    )


def write_synthetic_dataset(params: SynthParams, out_dir) -> Path:
    """Generate and save a dataset plus a regeneration manifest."""
    out = Path(out_dir)
    ds = generate_dataset(params)
    save_dataset(ds, out)
    manifest = asdict(params)
    manifest["generator"] = "structprop.synth"
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out
