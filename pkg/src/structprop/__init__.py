"""Transductive zero-shot learning via class-structure propagation.

Classifiers for unseen classes are synthesized from optimized phantom
vectors, guided by similarity graphs between seen and unseen classes in
semantic and image space; the image-space graph is bootstrapped from the
method's own predictions and refined over iterations.
"""
from .crossval import CVResult, GridSpec, split_seen_classes, tune
from .data import (
    ClassPrototypes,
    Dataset,
    IngestConfig,
    class_prototypes,
    load_dataset,
    save_dataset,
)
from .fusion import FusionSpec, build_fused_objective, build_semantic_graphs, fused_semantic_weight
from .graph import SimilarityGraph, scaled_distance, similarity_graph, zero_graph
from .model import ModelState, blended_weights, predict, predict_batch, synthesize
from .optimizer import (
    Objective,
    SolverSettings,
    alternate,
    loss_gradients,
    loss_value,
    project_simplex,
    solve_V,
    solve_beta,
)
from .params import DEFAULT_SEED, Hyperparams
from .propagation import (
    EvalReport,
    PropagationSettings,
    PropagationState,
    evaluate,
    propagate,
    score_trace,
)
from .synth import SynthParams, generate_dataset, write_synthetic_dataset

__all__ = [
    "CVResult",
    "ClassPrototypes",
    "DEFAULT_SEED",
    "Dataset",
    "EvalReport",
    "FusionSpec",
    "GridSpec",
    "Hyperparams",
    "IngestConfig",
    "ModelState",
    "Objective",
    "PropagationSettings",
    "PropagationState",
    "SimilarityGraph",
    "SolverSettings",
    "SynthParams",
    "alternate",
    "blended_weights",
    "build_fused_objective",
    "build_semantic_graphs",
    "class_prototypes",
    "evaluate",
    "fused_semantic_weight",
    "generate_dataset",
    "load_dataset",
    "loss_gradients",
    "loss_value",
    "predict",
    "predict_batch",
    "project_simplex",
    "propagate",
    "save_dataset",
    "scaled_distance",
    "score_trace",
    "similarity_graph",
    "solve_V",
    "solve_beta",
    "split_seen_classes",
    "synthesize",
    "tune",
    "write_synthetic_dataset",
    "zero_graph",
]
