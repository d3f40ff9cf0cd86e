"""Multi-source structure fusion.

Any number of semantic sources can contribute a similarity graph; the tail
of the shared simplex vector beta weighs them, with beta[0] reserved for
the image-space graph when it participates.  One source with the image
slot reduces to the plain two-graph objective.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .graph import SimilarityGraph, similarity_graph, zero_graph
from .optimizer import Objective
from .params import Hyperparams


@dataclass(frozen=True)
class FusionSpec:
    """Which semantic sources participate, and whether the image graph does."""

    source_names: tuple[str, ...]
    include_image: bool = True

    def __post_init__(self):
        object.__setattr__(self, "source_names", tuple(self.source_names))
        if len(set(self.source_names)) != len(self.source_names):
            raise ValueError(f"duplicate source names: {self.source_names}")
        if not self.source_names:
            raise ValueError("at least one semantic source is required")

    @property
    def k(self) -> int:
        """Length of the beta vector."""
        return int(self.include_image) + len(self.source_names)


def fused_semantic_weight(beta_tail: np.ndarray, graphs: list[np.ndarray]) -> np.ndarray:
    """Weighted sum of per-source weight matrices under the beta tail."""
    beta_tail = np.asarray(beta_tail, dtype=np.float64)
    if beta_tail.shape[0] != len(graphs):
        raise ValueError(f"{beta_tail.shape[0]} weights for {len(graphs)} graphs")
    mats = [np.asarray(g, dtype=np.float64) for g in graphs]
    shape = mats[0].shape
    for m in mats:
        if m.shape != shape:
            raise ValueError("all source matrices must share one shape")
    out = np.zeros(shape)
    for coef, m in zip(beta_tail, mats):
        out += coef * m
    return out


def build_semantic_graphs(dataset: Dataset, spec: FusionSpec, hyperparams: Hyperparams) -> list[SimilarityGraph]:
    """One similarity graph per named source, each with its own bandwidth."""
    graphs = []
    for name in spec.source_names:
        if name not in dataset.semantic_sources:
            raise KeyError(f"unknown source name: {name!r}")
        seen_rows = dataset.source_rows(name, dataset.seen_classes)
        unseen_rows = dataset.source_rows(name, dataset.unseen_classes)
        graphs.append(
            similarity_graph(
                seen_rows,
                unseen_rows,
                hyperparams.sigma_for(name),
                space=f"semantic:{name}",
            )
        )
    return graphs


def build_fused_objective(
    dataset: Dataset,
    spec: FusionSpec,
    hyperparams: Hyperparams,
    hinge: str = "squared",
) -> Objective:
    """Objective over the selected sources, image slot zero-initialized.

    The training matrices come from the dataset's labeled samples; labels
    are converted to dense seen-class indices in canonical order.
    """
    graphs: list[SimilarityGraph] = []
    if spec.include_image:
        graphs.append(zero_graph(dataset.n_seen, dataset.n_unseen))
    graphs.extend(build_semantic_graphs(dataset, spec, hyperparams))

    seen_index = {c: i for i, c in enumerate(dataset.seen_classes)}
    dense = np.array([seen_index[int(c)] for c in dataset.train_labels], dtype=np.int64)
    return Objective(
        features=dataset.train_features,
        labels=dense,
        lam=hyperparams.lam,
        gamma=hyperparams.gamma,
        graphs=graphs,
        include_image=spec.include_image,
        hinge=hinge,
    )
