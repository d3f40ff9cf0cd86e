"""Iterative structure propagation.

Each round optimizes phantom rows and blend weights against the current
graphs, synthesizes classifiers, labels the test samples over the unseen
classes, recomputes unseen-class image prototypes from those predicted
assignments, and rebuilds the image-space graph from them.  The semantic
graphs and the seen-class image prototypes are fixed throughout; only the
image graph and therefore the optimization problem evolve.

True test labels never enter this module's pipeline: scoring lives in
:func:`evaluate` / :func:`score_trace`, which the caller applies afterward.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, class_prototypes
from .fusion import FusionSpec, build_fused_objective
from .graph import SimilarityGraph, similarity_graph
from .model import ModelState, predict_batch, synthesize
from .optimizer import Objective, SolverSettings, alternate
from .params import Hyperparams


@dataclass
class EvalReport:
    """Per-class accuracies and their unweighted mean over populated classes."""

    accuracy: float
    per_class: dict[int, float]
    counts: dict[int, int]


@dataclass
class PropagationSettings:
    fusion: FusionSpec
    solver: SolverSettings = field(default_factory=SolverSettings)
    warm_start: bool = True
    early_exit: bool = True
    hinge: str = "squared"


@dataclass
class PropagationState:
    """Everything the loop produced, including one prediction set per round."""

    iteration: int
    graphs: list[SimilarityGraph]
    model: ModelState
    predicted_labels: np.ndarray
    predictions_per_iter: list[np.ndarray]
    objective_traces: list[list[float]]
    accuracy_trace: list[EvalReport] = field(default_factory=list)


def propagate(
    dataset: Dataset,
    test_features: np.ndarray,
    hyperparams: Hyperparams,
    settings: PropagationSettings,
) -> PropagationState:
    """Run the propagation loop for ``hyperparams.iters`` rounds.

    Stops early when predictions repeat (``settings.early_exit``).  Without
    the image slot the loop collapses to a single round, since nothing in
    the problem changes between rounds.
    """
    test_features = np.asarray(test_features, dtype=np.float64)
    if test_features.ndim != 2 or test_features.shape[1] != dataset.feature_dim:
        raise ValueError("test features must be (M, D) with the dataset's feature width")
    fusion = settings.fusion
    objective = build_fused_objective(dataset, fusion, hyperparams, hinge=settings.hinge)

    seen_protos = None
    if fusion.include_image:
        seen_protos = class_prototypes(
            dataset.train_features, dataset.train_labels, dataset.seen_classes
        )
        missing = [c for c in dataset.seen_classes if not seen_protos.present[c]]
        if missing:
            raise ValueError(f"seen classes without training samples: {missing}")

    row_classes = np.array(dataset.class_order, dtype=np.int64)
    unseen_rows = np.arange(dataset.n_seen, dataset.n_seen + dataset.n_unseen)
    unseen_ids = np.array(dataset.unseen_classes, dtype=np.int64)

    V = beta = None
    predictions: list[np.ndarray] = []
    traces: list[list[float]] = []
    model = None
    rounds = hyperparams.iters if fusion.include_image else 1
    for _ in range(rounds):
        if settings.warm_start and V is not None:
            V_new, beta_new, trace = alternate(objective, settings.solver, V, beta)
        else:
            V_new, beta_new, trace = alternate(objective, settings.solver)
        V, beta = V_new, beta_new
        A = synthesize(V, beta, objective.graphs)
        model = ModelState(V=V, beta=beta, A=A)
        preds = predict_batch(A, unseen_rows, test_features, row_classes)
        if preds.size == 0:
            raise ValueError("degenerate assignment: every unseen class is empty")
        predictions.append(preds)
        traces.append(trace)

        if fusion.include_image:
            objective = _refresh_image_graph(
                objective, seen_protos, test_features, preds, unseen_ids,
                dataset, hyperparams,
            )
        if (
            settings.early_exit
            and len(predictions) >= 2
            and np.array_equal(predictions[-1], predictions[-2])
        ):
            break

    return PropagationState(
        iteration=len(predictions),
        graphs=objective.graphs,
        model=model,
        predicted_labels=predictions[-1],
        predictions_per_iter=predictions,
        objective_traces=traces,
    )


def _refresh_image_graph(objective, seen_protos, test_features, preds, unseen_ids,
                         dataset, hyperparams):
    unseen_protos = class_prototypes(test_features, preds, unseen_ids)
    mask = unseen_protos.mask(unseen_ids)
    if not mask.any():
        raise ValueError("degenerate assignment: every unseen class is empty")
    image_graph = similarity_graph(
        seen_protos.matrix(dataset.seen_classes),
        unseen_protos.matrix(unseen_ids),
        hyperparams.sigma_image,
        defined=mask,
        space="image",
    )
    return Objective(
        features=objective.features,
        labels=objective.labels,
        lam=objective.lam,
        gamma=objective.gamma,
        graphs=[image_graph] + objective.graphs[1:],
        include_image=True,
        hinge=objective.hinge,
    )


def evaluate(predicted, truth, classes) -> EvalReport:
    """Average per-class top-1 accuracy over the classes that have samples.

    Classes are weighted equally regardless of how many samples they have.
    """
    predicted = np.asarray(predicted, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if predicted.shape != truth.shape:
        raise ValueError(
            f"length mismatch: {predicted.shape[0]} predictions vs {truth.shape[0]} labels"
        )
    per_class: dict[int, float] = {}
    counts: dict[int, int] = {}
    for c in classes:
        hits = truth == int(c)
        count = int(hits.sum())
        counts[int(c)] = count
        if count:
            per_class[int(c)] = float(np.sum(predicted[hits] == int(c))) / count
    if not per_class:
        raise ValueError("no test samples fall in the given classes")
    accuracy = float(sum(per_class[c] for c in sorted(per_class)) / len(per_class))
    return EvalReport(accuracy=accuracy, per_class=per_class, counts=counts)


def score_trace(state: PropagationState, truth, classes) -> list[EvalReport]:
    """Evaluate every round's predictions and store the reports on the state."""
    reports = [evaluate(p, truth, classes) for p in state.predictions_per_iter]
    state.accuracy_trace = reports
    return reports
