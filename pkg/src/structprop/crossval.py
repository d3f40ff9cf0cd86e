"""Hyperparameter selection on class-proportional splits of the seen classes.

The seen classes are split so the validation side mimics the seen/unseen
proportion of the real problem; validation classes play the role of unseen
classes and the full propagation pipeline runs on each fold.  Search is
two-staged: first the ridge and alignment weights on log-scale grids with
every bandwidth at 1, then the bandwidths coordinate-wise (each space on
its grid while the others hold their current best).

True unseen classes and real test features never enter tuning.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .fusion import FusionSpec
from .optimizer import SolverSettings
from .params import DEFAULT_SEED, Hyperparams
from .propagation import PropagationSettings, evaluate, propagate

WORKERS_ENV = "STRUCTPROP_WORKERS"


def _pow2(lo: int, hi: int, stride: int = 1) -> tuple[float, ...]:
    return tuple(2.0 ** e for e in range(lo, hi + 1, stride))


@dataclass(frozen=True)
class GridSpec:
    """Log-scale search grids; exponents step by one unless subsampled."""

    lambda_grid: tuple[float, ...] = field(default_factory=lambda: _pow2(-24, -9))
    gamma_grid: tuple[float, ...] = field(default_factory=lambda: _pow2(-24, -9))
    sigma_grid: tuple[float, ...] = field(default_factory=lambda: _pow2(-5, 5))
    fold_count: int = 2

    def __post_init__(self):
        for name in ("lambda_grid", "gamma_grid", "sigma_grid"):
            grid = getattr(self, name)
            if not grid:
                raise ValueError(f"{name} must be nonempty")
            if any(v <= 0 for v in grid):
                raise ValueError(f"{name} values must be positive")
        if self.fold_count < 1:
            raise ValueError("fold_count must be at least 1")


@dataclass
class CVResult:
    chosen: Hyperparams
    chosen_accuracy: float
    rows: list[dict]                      # one record per evaluated (cell, fold)
    table: dict[tuple, float]             # cell key -> mean validation accuracy


def split_seen_classes(seen, ratio: float, fold_index: int, rng_seed: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Deterministic class split with the validation side sized by ratio.

    One seeded shuffle fixes the class order; fold f validates the f-th
    window of round(ratio * S) classes, so successive folds slide over
    distinct validation sets.
    """
    seen = [int(c) for c in seen]
    n = len(seen)
    n_val = round(ratio * n)
    if n_val < 1 or n_val >= n:
        raise ValueError(f"ratio {ratio} yields an empty side for {n} seen classes")
    perm = np.random.default_rng(rng_seed).permutation(n)
    positions = [(fold_index * n_val + i) % n for i in range(n_val)]
    val = sorted(seen[perm[p]] for p in positions)
    val_set = set(val)
    train = sorted(c for c in seen if c not in val_set)
    return tuple(train), tuple(val)


def make_validation_problem(
    dataset: Dataset, train_classes, val_classes
) -> tuple[Dataset, np.ndarray, np.ndarray]:
    """Fold sub-problem: val classes become the unseen set.

    Returns (sub-dataset, validation features, validation truth).  Only
    training rows of the parent dataset are used.
    """
    train_set = {int(c) for c in train_classes}
    val_set = {int(c) for c in val_classes}
    labels = dataset.train_labels
    feats = dataset.train_features
    keep = np.array([int(l) in train_set or int(l) in val_set for l in labels])
    feats = feats[keep]
    labels = labels[keep]
    is_val = np.array([int(l) in val_set for l in labels])

    masked = labels.copy()
    masked[is_val] = -1
    sub_order = sorted(train_set) + sorted(val_set)
    sources = {
        name: dataset.source_rows(name, sub_order) for name in dataset.semantic_sources
    }
    sub = Dataset(
        features=feats,
        labels=masked,
        seen_classes=tuple(sorted(train_set)),
        unseen_classes=tuple(sorted(val_set)),
        semantic_sources=sources,
        labels_true=labels,
    )
    return sub, feats[is_val], labels[is_val]


def _row_key(hp: Hyperparams, sources, include_image: bool, fold: int) -> tuple:
    sigmas = tuple(hp.sigma_for(s) for s in sources)
    image = hp.sigma_image if include_image else None
    return (hp.lam, hp.gamma, image, sigmas, fold)


def _cell_key(hp: Hyperparams, sources, include_image: bool) -> tuple:
    return _row_key(hp, sources, include_image, -1)[:-1]


def tune(
    dataset: Dataset,
    grid: GridSpec,
    fusion: FusionSpec,
    *,
    iters: int = 10,
    solver: SolverSettings | None = None,
    hinge: str = "squared",
    rng_seed: int = DEFAULT_SEED,
    workers: int | None = None,
    cache: dict | None = None,
    on_row=None,
) -> CVResult:
    """Two-stage grid search scored by fold-mean per-class accuracy.

    ``cache`` maps row keys to already-known accuracies (resume support);
    ``on_row`` is called with each newly computed row record.  Ties break
    toward the smallest (lambda, gamma) pair and then the smallest sigma.
    """
    solver = solver or SolverSettings()
    sources = fusion.source_names
    ratio = dataset.n_unseen / (dataset.n_seen + dataset.n_unseen)
    folds = []
    for f in range(grid.fold_count):
        train_cls, val_cls = split_seen_classes(dataset.seen_classes, ratio, f, rng_seed)
        folds.append(make_validation_problem(dataset, train_cls, val_cls))

    cache = dict(cache) if cache else {}
    rows: list[dict] = []
    table: dict[tuple, float] = {}
    settings = PropagationSettings(fusion=fusion, solver=solver, hinge=hinge)

    def fold_accuracy(hp: Hyperparams, fold: int) -> float:
        sub, val_feats, val_truth = folds[fold]
        state = propagate(sub, val_feats, hp, settings)
        return evaluate(state.predicted_labels, val_truth, sub.unseen_classes).accuracy

    def run_cells(cells: list[Hyperparams]) -> None:
        """Fill cache/table for the given cells, fanning folds out to a pool."""
        pending = []
        for hp in cells:
            for fold in range(grid.fold_count):
                key = _row_key(hp, sources, fusion.include_image, fold)
                if key not in cache:
                    pending.append((key, hp, fold))
        if pending:
            max_workers = workers or int(os.environ.get(WORKERS_ENV, "0")) or min(
                8, os.cpu_count() or 1
            )
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                futures = {
                    key: pool.submit(fold_accuracy, hp, fold)
                    for key, hp, fold in pending
                }
                for key, fut in futures.items():
                    cache[key] = fut.result()
        for hp in cells:
            accs = []
            for fold in range(grid.fold_count):
                key = _row_key(hp, sources, fusion.include_image, fold)
                accs.append(cache[key])
                record = _record(hp, sources, fusion.include_image, fold, cache[key])
                if record not in rows:
                    rows.append(record)
                    if on_row is not None:
                        on_row(record)
            table[_cell_key(hp, sources, fusion.include_image)] = float(np.mean(accs))

    def mean_at(hp: Hyperparams) -> float:
        return table[_cell_key(hp, sources, fusion.include_image)]

    # stage 1: (lambda, gamma) with every bandwidth at 1
    stage1 = [
        Hyperparams(lam=lam, gamma=gam, sigma_image=1.0,
                    sigma_sources={s: 1.0 for s in sources}, iters=iters)
        for lam in sorted(grid.lambda_grid)
        for gam in sorted(grid.gamma_grid)
    ]
    run_cells(stage1)
    best = stage1[0]
    for hp in stage1[1:]:  # grid is in ascending (lambda, gamma) order: ties keep the smaller
        if mean_at(hp) > mean_at(best):
            best = hp

    # stage 2: bandwidths, one space at a time (sources first, then image)
    spaces = list(sources) + (["image"] if fusion.include_image else [])
    current = best
    for space in spaces:
        candidates = []
        for sig in sorted(grid.sigma_grid):
            if space == "image":
                candidates.append(current.replace(sigma_image=sig))
            else:
                sigmas = dict(current.sigma_sources)
                sigmas[space] = sig
                candidates.append(current.replace(sigma_sources=sigmas))
        run_cells(candidates)
        sweep_best = candidates[0]  # ascending sigma: ties keep the smaller
        for hp in candidates[1:]:
            if mean_at(hp) > mean_at(sweep_best):
                sweep_best = hp
        current = sweep_best

    return CVResult(
        chosen=current,
        chosen_accuracy=mean_at(current),
        rows=rows,
        table=table,
    )


def _record(hp: Hyperparams, sources, include_image: bool, fold: int, accuracy: float) -> dict:
    rec = {"lambda": hp.lam, "gamma": hp.gamma}
    if include_image:
        rec["sigma_image"] = hp.sigma_image
    for s in sources:
        rec[f"sigma_{s}"] = hp.sigma_for(s)
    rec["fold"] = fold
    rec["accuracy"] = accuracy
    return rec
