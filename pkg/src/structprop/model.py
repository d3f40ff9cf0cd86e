"""Classifier synthesis from phantom classes and linear label prediction.

Seen-class classifiers are convex combinations of the phantom-class rows,
with combination weights given by blending the per-space similarity graphs
under the simplex vector beta.  Unseen-class classifiers are the phantom
rows themselves: the bipartite graphs carry no unseen-to-unseen weights,
so the identity self-weight is the only consistent choice.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import SimilarityGraph

SIMPLEX_TOL = 1e-6


@dataclass
class ModelState:
    """Phantom rows V (one per unseen class), simplex weights beta, and the
    synthesized classifier matrix A (seen rows first, then unseen)."""

    V: np.ndarray       # (U, D)
    beta: np.ndarray    # (k,)
    A: np.ndarray       # (S+U, D)


def check_simplex(beta: np.ndarray, tol: float = SIMPLEX_TOL) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim != 1:
        raise ValueError("beta must be a vector")
    if np.any(beta < -tol) or np.any(beta > 1 + tol) or abs(beta.sum() - 1.0) > tol:
        raise ValueError(f"beta is off the probability simplex: {beta}")
    return beta


def blended_weights(beta: np.ndarray, graphs: list[SimilarityGraph]) -> np.ndarray:
    """Convex combination sum_g beta[g] * W_g of the graph weight matrices."""
    if len(graphs) != beta.shape[0]:
        raise ValueError(f"beta length {beta.shape[0]} != number of graphs {len(graphs)}")
    shape = graphs[0].shape
    for g in graphs:
        if g.shape != shape:
            raise ValueError("all graphs must share one shape")
    out = np.zeros(shape)
    for coef, g in zip(beta, graphs):
        out += coef * g.weights
    return out


def synthesize(V: np.ndarray, beta: np.ndarray, graphs: list[SimilarityGraph]) -> np.ndarray:
    """Build the (S+U, D) classifier matrix from phantom rows.

    Seen row s is the blended-weight combination of V's rows; unseen row u
    is V[u] itself.  Row order matches the canonical class order.
    """
    V = np.asarray(V, dtype=np.float64)
    beta = check_simplex(beta)
    wbar = blended_weights(beta, graphs)
    if V.shape[0] != wbar.shape[1]:
        raise ValueError(f"V has {V.shape[0]} rows, graphs have {wbar.shape[1]} columns")
    return np.vstack([wbar @ V, V])


def predict(A: np.ndarray, candidate_rows, x: np.ndarray, row_classes) -> int:
    """Class id whose classifier row maximizes the inner product with x.

    ``row_classes`` maps A's rows to class ids; ties go to the smallest id.
    """
    return int(predict_batch(A, candidate_rows, np.asarray(x)[None, :], row_classes)[0])


def predict_batch(A: np.ndarray, candidate_rows, X: np.ndarray, row_classes) -> np.ndarray:
    """Vectorized :func:`predict` over the rows of X."""
    candidate_rows = np.asarray(candidate_rows, dtype=np.int64)
    if candidate_rows.size == 0:
        raise ValueError("empty candidate set")
    row_classes = np.asarray(row_classes, dtype=np.int64)
    ids = row_classes[candidate_rows]
    order = np.argsort(ids, kind="stable")  # argmax then picks the smallest id on ties
    rows = candidate_rows[order]
    scores = np.asarray(X, dtype=np.float64) @ A[rows].T
    best = np.argmax(scores, axis=1)
    return ids[order][best]
