"""Bipartite seen/unseen class-similarity graphs.

A graph lives in one representation space (a semantic source or the image
feature space) and stores, for every seen class, a row-stochastic weight
vector over the unseen classes.  Weights are a softmax of negative scaled
squared distances between class prototypes.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class SimilarityGraph:
    """Seen-by-unseen weight matrix for one representation space.

    ``zero_init`` marks the all-zeros image graph used before any unseen
    class has a prototype; such a graph is exempt from the row-sum check.
    """

    space: str
    weights: np.ndarray  # (S, U)
    sigma: float
    zero_init: bool = False
    defined: np.ndarray = field(default=None)  # (U,) bool column mask

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {w.shape}")
        if self.defined is None:
            object.__setattr__(self, "defined", np.ones(w.shape[1], dtype=bool))
        else:
            d = np.asarray(self.defined, dtype=bool)
            if d.shape != (w.shape[1],):
                raise ValueError("defined mask length must match column count")
            object.__setattr__(self, "defined", d)
        if self.zero_init:
            if np.any(w != 0.0):
                raise ValueError("zero-init graph must be all zeros")
            return
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if np.any(w < 0) or np.any(w > 1):
            raise ValueError("weights must lie in [0, 1]")
        row_sums = w.sum(axis=1)
        if np.max(np.abs(row_sums - 1.0)) > ROW_SUM_TOL:
            raise ValueError("rows must sum to 1")

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape


def scaled_distance(p: np.ndarray, q: np.ndarray, sigma: float) -> float:
    """Squared Euclidean distance divided by the bandwidth sigma."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    diff = p - q
    return float(diff @ diff) / sigma


def similarity_graph(
    seen_vectors: np.ndarray,
    unseen_vectors: np.ndarray,
    sigma: float,
    defined: np.ndarray | None = None,
    space: str = "",
) -> SimilarityGraph:
    """Row-stochastic softmax similarity between seen and unseen prototypes.

    Each row s holds exp(-d(s, u)) normalized over the defined unseen
    columns.  Columns with ``defined`` False (no prototype available yet)
    get weight 0 and the row renormalizes over the rest.  The exponent is
    shifted by the row minimum distance so rows stay stochastic even when
    every distance is far past the float64 underflow point.
    """
    seen = np.asarray(seen_vectors, dtype=np.float64)
    unseen = np.asarray(unseen_vectors, dtype=np.float64)
    if seen.ndim != 2 or unseen.ndim != 2:
        raise ValueError("prototype arrays must be 2-D")
    if seen.shape[1] != unseen.shape[1]:
        raise ValueError(
            f"dimension mismatch: seen {seen.shape[1]} vs unseen {unseen.shape[1]}"
        )
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    n_unseen = unseen.shape[0]
    if defined is None:
        defined = np.ones(n_unseen, dtype=bool)
    else:
        defined = np.asarray(defined, dtype=bool)
    if not defined.any():
        raise ValueError("all unseen prototypes undefined")

    # (S, U) scaled squared distances; undefined columns never enter the softmax.
    diff = seen[:, None, :] - unseen[None, :, :]
    dist = np.einsum("sud,sud->su", diff, diff) / sigma
    dist_def = dist[:, defined]
    shifted = dist_def - dist_def.min(axis=1, keepdims=True)
    expw = np.exp(-shifted)
    weights = np.zeros_like(dist)
    weights[:, defined] = expw / expw.sum(axis=1, keepdims=True)
    return SimilarityGraph(space=space, weights=weights, sigma=float(sigma), defined=defined)


def zero_graph(n_seen: int, n_unseen: int, space: str = "image") -> SimilarityGraph:
    """All-zeros initialization graph (no image structure known yet)."""
    if n_seen < 1 or n_unseen < 1:
        raise ValueError("graph needs at least one seen and one unseen class")
    return SimilarityGraph(
        space=space,
        weights=np.zeros((n_seen, n_unseen)),
        sigma=1.0,
        zero_init=True,
        defined=np.zeros(n_unseen, dtype=bool),
    )


def dump_graph_csv(graph: SimilarityGraph, unseen_classes, path) -> None:
    """Write the weight matrix as CSV with a header of unseen class ids."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([str(c) for c in unseen_classes])
        for row in graph.weights:
            writer.writerow([repr(float(v)) for v in row])
