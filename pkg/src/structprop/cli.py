"""Command-line experiment harness.

Subcommands:

    run    load a dataset, propagate, write predictions.csv + report.json
    tune   two-stage grid search, write cv_table.csv + chosen_params.json
    synth  generate a seeded synthetic dataset directory

Every artifact directory gets a config.json with the resolved options and
seed so a run can be reproduced bit for bit.  Exit code 0 on success, 1
with a diagnostic on any error (partially written outputs are removed).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .crossval import GridSpec, tune
from .data import load_dataset
from .fusion import FusionSpec
from .graph import dump_graph_csv
from .optimizer import SolverSettings
from .params import DEFAULT_SEED, Hyperparams
from .propagation import PropagationSettings, propagate, score_trace
from .synth import SynthParams, write_synthetic_dataset


@dataclass
class RunConfig:
    dataset: str
    output: str
    sources: tuple[str, ...] | None = None    # None = every source in the dataset
    params_file: str | None = None
    lam: float = 2.0 ** -10
    gamma: float = 2.0 ** -10
    sigma_image: float = 1.0
    sigma_sources: dict = field(default_factory=dict)  # empty = 1.0 everywhere
    iters: int = 10
    seed: int = DEFAULT_SEED
    no_image_structure: bool = False
    hinge: str = "squared"
    trace: bool = False
    dump_graphs: str | None = None
    max_outer_iters: int = 50
    outer_tol: float = 1e-5
    inner_tol: float = 1e-6


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="structprop",
        description="Transductive zero-shot learning via class-structure propagation",
    )
    sub = parser.add_subparsers(required=True)

    run = sub.add_parser("run", help="propagate labels over a dataset")
    run.add_argument("--dataset", required=True, help="dataset directory")
    run.add_argument("--output", required=True, help="output directory")
    run.add_argument("--sources", help="comma-separated semantic sources (default: all)")
    run.add_argument("--params", dest="params_file", help="chosen-params JSON from `tune`")
    run.add_argument("--lam", type=float, default=2.0 ** -10)
    run.add_argument("--gamma", type=float, default=2.0 ** -10)
    run.add_argument("--sigma-image", type=float, default=1.0)
    run.add_argument(
        "--sigma-sources",
        default="",
        help="bandwidths as 'name=value,...' or one value for all sources",
    )
    run.add_argument("--iters", type=int, default=10, help="propagation rounds")
    run.add_argument("--seed", type=int, default=DEFAULT_SEED)
    run.add_argument("--no-image-structure", action="store_true",
                     help="drop the image graph (single-round ablation)")
    run.add_argument("--hinge", choices=["squared", "plain"], default="squared")
    run.add_argument("--trace", action="store_true",
                     help="emit per-round objective traces as iter,objective lines")
    run.add_argument("--dump-graphs", help="directory for graph CSV dumps")
    run.add_argument("--max-outer-iters", type=int, default=50)
    run.add_argument("--outer-tol", type=float, default=1e-5)
    run.add_argument("--inner-tol", type=float, default=1e-6)
    run.set_defaults(handler=cmd_run_args)

    tun = sub.add_parser("tune", help="grid-search hyperparameters by cross validation")
    tun.add_argument("--dataset", required=True)
    tun.add_argument("--output", required=True)
    tun.add_argument("--sources", help="comma-separated semantic sources (default: all)")
    tun.add_argument("--lambda-exps", default="-24:-9", help="lo:hi powers of two")
    tun.add_argument("--gamma-exps", default="-24:-9")
    tun.add_argument("--sigma-exps", default="-5:5")
    tun.add_argument("--exp-stride", type=int, default=1)
    tun.add_argument("--folds", type=int, default=2)
    tun.add_argument("--iters", type=int, default=10)
    tun.add_argument("--seed", type=int, default=DEFAULT_SEED)
    tun.add_argument("--no-image-structure", action="store_true")
    tun.add_argument("--hinge", choices=["squared", "plain"], default="squared")
    tun.add_argument("--workers", type=int, help="worker pool size "
                     "(default: STRUCTPROP_WORKERS env var, else cpu-bounded)")
    tun.add_argument("--max-outer-iters", type=int, default=50)
    tun.add_argument("--outer-tol", type=float, default=1e-5)
    tun.add_argument("--inner-tol", type=float, default=1e-6)
    tun.set_defaults(handler=cmd_tune_args)

    syn = sub.add_parser("synth", help="generate a synthetic dataset directory")
    syn.add_argument("--output", required=True)
    syn.add_argument("--seen", type=int, default=6)
    syn.add_argument("--unseen", type=int, default=3)
    syn.add_argument("--dim", type=int, default=12)
    syn.add_argument("--source-dims", default="8", help="comma-separated embedding widths")
    syn.add_argument("--train-per-class", type=int, default=20)
    syn.add_argument("--test-per-class", type=int, default=20)
    syn.add_argument("--centroid-scale", type=float, default=3.0)
    syn.add_argument("--image-noise", type=float, default=0.5)
    syn.add_argument("--semantic-noise", default="0.0",
                     help="one value or comma-separated per-source values")
    syn.add_argument("--seed", type=int, default=DEFAULT_SEED)
    syn.set_defaults(handler=cmd_synth_args)
    return parser


# -- run --------------------------------------------------------------------


def cmd_run_args(args) -> int:
    config = RunConfig(
        dataset=args.dataset,
        output=args.output,
        sources=tuple(args.sources.split(",")) if args.sources else None,
        params_file=args.params_file,
        lam=args.lam,
        gamma=args.gamma,
        sigma_image=args.sigma_image,
        sigma_sources=_parse_sigma_sources(args.sigma_sources),
        iters=args.iters,
        seed=args.seed,
        no_image_structure=args.no_image_structure,
        hinge=args.hinge,
        trace=args.trace,
        dump_graphs=args.dump_graphs,
        max_outer_iters=args.max_outer_iters,
        outer_tol=args.outer_tol,
        inner_tol=args.inner_tol,
    )
    return cmd_run(config)


def cmd_run(config: RunConfig) -> int:
    """Full pipeline over a dataset directory; see module docstring for outputs."""
    dataset = load_dataset(config.dataset)
    sources = config.sources or tuple(sorted(dataset.semantic_sources))
    if not sources:
        raise ValueError("dataset has no semantic sources")
    hyper = _resolve_hyperparams(config, sources)
    fusion = FusionSpec(source_names=sources, include_image=not config.no_image_structure)
    settings = PropagationSettings(
        fusion=fusion, solver=_solver_settings(config), hinge=config.hinge
    )
    if dataset.test_features.shape[0] == 0:
        raise ValueError("dataset has no test samples (labels.csv contains no -1 rows)")

    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        state = propagate(dataset, dataset.test_features, hyper, settings)
        if config.trace:
            for t, trace in enumerate(state.objective_traces, start=1):
                print(f"# objective trace, round {t}")
                for i, value in enumerate(trace):
                    print(f"{i},{value!r}")

        report = {
            "accuracy": None,
            "per_class": None,
            "accuracy_trace": None,
            "beta": [float(b) for b in state.model.beta],
            "hyperparams": hyper.to_dict(),
            "iterations_run": state.iteration,
            "objective_traces": state.objective_traces,
            "config": asdict(config),
            "seed": config.seed,
        }
        truth = dataset.test_labels_true
        if truth is not None:
            reports = score_trace(state, truth, dataset.unseen_classes)
            report["accuracy"] = reports[-1].accuracy
            report["per_class"] = {str(c): v for c, v in sorted(reports[-1].per_class.items())}
            report["accuracy_trace"] = [r.accuracy for r in reports]
            for t, r in enumerate(reports, start=1):
                print(f"{t},{r.accuracy!r}")

        written.append(out / "predictions.csv")
        _write_predictions(written[-1], dataset, state)
        written.append(out / "report.json")
        _write_json(written[-1], report)
        written.append(out / "config.json")
        _write_json(written[-1], {"config": asdict(config), "seed": config.seed})
        if config.dump_graphs:
            gdir = Path(config.dump_graphs)
            gdir.mkdir(parents=True, exist_ok=True)
            for g in state.graphs:
                name = g.space.replace(":", "_") or "graph"
                written.append(gdir / f"{name}.csv")
                dump_graph_csv(g, dataset.unseen_classes, written[-1])
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return 0


def _write_predictions(path: Path, dataset, state) -> Path:
    indices = dataset.test_indices
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["sample_index"] + [f"iter_{t}" for t in range(1, len(state.predictions_per_iter) + 1)]
        )
        for row, idx in enumerate(indices):
            writer.writerow([int(idx)] + [int(p[row]) for p in state.predictions_per_iter])
    return path


def _write_json(path: Path, payload) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _parse_sigma_sources(text: str) -> dict:
    text = text.strip()
    if not text:
        return {}
    if "=" not in text:
        return {"*": float(text)}
    out = {}
    for part in text.split(","):
        name, _, value = part.partition("=")
        out[name.strip()] = float(value)
    return out


def _resolve_hyperparams(config: RunConfig, sources) -> Hyperparams:
    if config.params_file:
        with open(config.params_file, encoding="utf-8") as fh:
            loaded = json.load(fh)
        hyper = Hyperparams.from_dict(loaded)
        return hyper.replace(iters=config.iters)
    sigmas = config.sigma_sources
    if "*" in sigmas:
        per_source = {s: sigmas["*"] for s in sources}
    else:
        per_source = {s: sigmas.get(s, 1.0) for s in sources}
    return Hyperparams(
        lam=config.lam,
        gamma=config.gamma,
        sigma_image=config.sigma_image,
        sigma_sources=per_source,
        iters=config.iters,
    )


def _solver_settings(config: RunConfig) -> SolverSettings:
    return SolverSettings(
        max_outer_iters=config.max_outer_iters,
        outer_tolerance=config.outer_tol,
        v_tolerance=config.inner_tol,
        beta_tolerance=config.inner_tol,
    )


# -- tune -------------------------------------------------------------------


def _parse_exp_range(text: str, stride: int) -> tuple[float, ...]:
    lo, _, hi = text.partition(":")
    return tuple(2.0 ** e for e in range(int(lo), int(hi) + 1, stride))


def cmd_tune_args(args) -> int:
    dataset = load_dataset(args.dataset)
    sources = tuple(args.sources.split(",")) if args.sources else tuple(sorted(dataset.semantic_sources))
    fusion = FusionSpec(source_names=sources, include_image=not args.no_image_structure)
    grid = GridSpec(
        lambda_grid=_parse_exp_range(args.lambda_exps, args.exp_stride),
        gamma_grid=_parse_exp_range(args.gamma_exps, args.exp_stride),
        sigma_grid=_parse_exp_range(args.sigma_exps, args.exp_stride),
        fold_count=args.folds,
    )
    solver = SolverSettings(
        max_outer_iters=args.max_outer_iters,
        outer_tolerance=args.outer_tol,
        v_tolerance=args.inner_tol,
        beta_tolerance=args.inner_tol,
    )

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    table_path = out / "cv_table.csv"
    columns = ["lambda", "gamma"]
    if fusion.include_image:
        columns.append("sigma_image")
    columns += [f"sigma_{s}" for s in sources]
    columns += ["fold", "accuracy"]

    cache = _load_table_cache(table_path, columns, sources, fusion.include_image)
    with open(table_path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if not cache:
            fh.seek(0)
            fh.truncate()
            writer.writerow(columns)
            fh.flush()

        def on_row(rec):
            writer.writerow([repr(rec[c]) if c != "fold" else rec[c] for c in columns])
            fh.flush()

        result = tune(
            dataset,
            grid,
            fusion,
            iters=args.iters,
            solver=solver,
            hinge=args.hinge,
            rng_seed=args.seed,
            workers=args.workers,
            cache=cache,
            on_row=on_row,
        )

    # rewrite in canonical order so completed tables are identical across runs
    with open(table_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for rec in sorted(result.rows, key=lambda r: [r[c] for c in columns]):
            writer.writerow([repr(rec[c]) if c != "fold" else rec[c] for c in columns])

    chosen = result.chosen.to_dict()
    chosen["cv_accuracy"] = result.chosen_accuracy
    chosen["seed"] = args.seed
    _write_json(out / "chosen_params.json", chosen)
    _write_json(
        out / "config.json",
        {
            "dataset": args.dataset,
            "sources": list(sources),
            "lambda_exps": args.lambda_exps,
            "gamma_exps": args.gamma_exps,
            "sigma_exps": args.sigma_exps,
            "exp_stride": args.exp_stride,
            "folds": args.folds,
            "iters": args.iters,
            "no_image_structure": args.no_image_structure,
            "hinge": args.hinge,
            "seed": args.seed,
        },
    )
    print(f"chosen: {json.dumps(chosen, sort_keys=True)}")
    return 0


def _load_table_cache(path: Path, columns, sources, include_image: bool) -> dict:
    """Parse an existing cv_table.csv into row-key -> accuracy for resume."""
    if not path.exists():
        return {}
    cache: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != columns:
            return {}
        for rec in reader:
            sigmas = tuple(float(rec[f"sigma_{s}"]) for s in sources)
            image = float(rec["sigma_image"]) if include_image else None
            key = (float(rec["lambda"]), float(rec["gamma"]), image, sigmas, int(rec["fold"]))
            cache[key] = float(rec["accuracy"])
    return cache


# -- synth ------------------------------------------------------------------


def cmd_synth_args(args) -> int:
    dims = tuple(int(tok) for tok in args.source_dims.split(",") if tok.strip())
    noise_toks = [tok for tok in str(args.semantic_noise).split(",") if tok.strip()]
    noise = float(noise_toks[0]) if len(noise_toks) == 1 else tuple(float(t) for t in noise_toks)
    params = SynthParams(
        n_seen=args.seen,
        n_unseen=args.unseen,
        feature_dim=args.dim,
        source_dims=dims,
        train_per_class=args.train_per_class,
        test_per_class=args.test_per_class,
        centroid_scale=args.centroid_scale,
        image_noise=args.image_noise,
        semantic_noise=noise,
        seed=args.seed,
    )
    out = write_synthetic_dataset(params, args.output)
    print(f"wrote synthetic dataset to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
