"""Dataset ingestion and class prototypes.

Directory layout (all text UTF-8):

    features.csv            N rows of D comma-separated reals
    features.bin + shape.txt  optional packed little-endian float32 alternative
    labels.csv              N rows, one class id each; -1 marks a test sample
    labels_true.csv         optional, same shape; true ids for test samples
    splits.csv              "seen: id,id,..." and "unseen: id,id,..."
    semantic/<source>.csv   S+U rows: class id, then the embedding

Class ids are opaque integers.  Internally every matrix uses the canonical
row order: seen classes sorted ascending, then unseen classes sorted
ascending.  Features are held as float64 regardless of on-disk precision.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TEST_LABEL = -1


@dataclass(frozen=True)
class IngestConfig:
    """Knobs for ``load_dataset``.

    features_format: "auto" prefers features.csv, falling back to
    features.bin; "csv" / "bin" force one layout.
    """

    features_format: str = "auto"


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, labels, class split and per-class semantic tables.

    ``labels`` holds -1 for test samples; their hidden true ids (used only
    by evaluation) live in ``labels_true``.  Semantic tables are stored in
    canonical class-row order (sorted seen ids, then sorted unseen ids).
    """

    features: np.ndarray              # (N, D) float64
    labels: np.ndarray                # (N,) int
    seen_classes: tuple[int, ...]     # sorted
    unseen_classes: tuple[int, ...]   # sorted
    semantic_sources: dict[str, np.ndarray] = field(default_factory=dict)
    labels_true: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "seen_classes", tuple(sorted(int(c) for c in self.seen_classes)))
        object.__setattr__(self, "unseen_classes", tuple(sorted(int(c) for c in self.unseen_classes)))
        if self.labels_true is not None:
            object.__setattr__(self, "labels_true", np.asarray(self.labels_true, dtype=np.int64))
        _validate(self)

    # -- canonical ordering helpers -------------------------------------

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_seen(self) -> int:
        return len(self.seen_classes)

    @property
    def n_unseen(self) -> int:
        return len(self.unseen_classes)

    @property
    def class_order(self) -> tuple[int, ...]:
        """All class ids in canonical matrix row order."""
        return self.seen_classes + self.unseen_classes

    @property
    def train_mask(self) -> np.ndarray:
        return self.labels != TEST_LABEL

    @property
    def test_mask(self) -> np.ndarray:
        return self.labels == TEST_LABEL

    @property
    def train_features(self) -> np.ndarray:
        return self.features[self.train_mask]

    @property
    def train_labels(self) -> np.ndarray:
        return self.labels[self.train_mask]

    @property
    def test_features(self) -> np.ndarray:
        return self.features[self.test_mask]

    @property
    def test_indices(self) -> np.ndarray:
        """Row indices (into ``features``) of the test samples."""
        return np.flatnonzero(self.test_mask)

    @property
    def test_labels_true(self) -> np.ndarray | None:
        if self.labels_true is None:
            return None
        return self.labels_true[self.test_mask]

    def source_rows(self, source: str, classes) -> np.ndarray:
        """Embedding rows of ``source`` for the given class ids."""
        table = self.semantic_sources[source]
        order = {c: i for i, c in enumerate(self.class_order)}
        idx = [order[int(c)] for c in classes]
        return table[idx]


def _validate(ds: Dataset) -> None:
    seen = set(ds.seen_classes)
    unseen = set(ds.unseen_classes)
    if seen & unseen:
        raise ValueError(f"seen and unseen classes overlap: {sorted(seen & unseen)}")
    if not seen or not unseen:
        raise ValueError("need at least one seen and one unseen class")
    if ds.features.ndim != 2 or ds.features.shape[0] < 1 or ds.features.shape[1] < 1:
        raise ValueError(f"features must be a non-empty 2-D matrix, got {ds.features.shape}")
    if ds.labels.shape != (ds.features.shape[0],):
        raise ValueError(
            f"labels length {ds.labels.shape} does not match {ds.features.shape[0]} samples"
        )
    for lab in np.unique(ds.labels):
        if lab == TEST_LABEL:
            continue
        if int(lab) not in seen:
            raise ValueError(f"unknown class in labels: {int(lab)} is not a seen class id")
    if ds.labels_true is not None:
        if ds.labels_true.shape != ds.labels.shape:
            raise ValueError("labels_true shape does not match labels")
        for lab in np.unique(ds.labels_true[ds.test_mask]):
            if int(lab) not in seen | unseen:
                raise ValueError(f"unknown class in labels_true: {int(lab)}")
    n_classes = len(ds.class_order)
    for name, table in ds.semantic_sources.items():
        table = np.asarray(table, dtype=np.float64)
        ds.semantic_sources[name] = table
        if table.ndim != 2 or table.shape[0] != n_classes:
            raise ValueError(
                f"embedding row count mismatch for source '{name}': "
                f"expected {n_classes} rows, got {table.shape[0]}"
            )


# -- loading ------------------------------------------------------------


def load_dataset(dir_path, config: IngestConfig | None = None) -> Dataset:
    """Read a dataset directory into a validated :class:`Dataset`."""
    config = config or IngestConfig()
    root = Path(dir_path)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {root}")

    seen, unseen = _read_splits(root / "splits.csv")
    features = _read_features(root, config)
    labels = _read_labels(root / "labels.csv", features.shape[0])
    truth_path = root / "labels_true.csv"
    labels_true = _read_labels(truth_path, features.shape[0]) if truth_path.exists() else None

    class_order = sorted(seen) + sorted(unseen)
    sources: dict[str, np.ndarray] = {}
    sem_dir = root / "semantic"
    if sem_dir.is_dir():
        for path in sorted(sem_dir.glob("*.csv")):
            sources[path.stem] = _read_semantic_table(path, class_order)

    return Dataset(
        features=features,
        labels=labels,
        seen_classes=tuple(seen),
        unseen_classes=tuple(unseen),
        semantic_sources=sources,
        labels_true=labels_true,
    )


def _read_splits(path: Path) -> tuple[list[int], list[int]]:
    if not path.exists():
        raise FileNotFoundError(f"missing file: {path}")
    parts: dict[str, list[int]] = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, rest = line.partition(":")
        ids = [int(tok) for tok in rest.split(",") if tok.strip()]
        parts[key.strip()] = ids
    for key in ("seen", "unseen"):
        if key not in parts:
            raise ValueError(f"splits.csv missing '{key}:' line")
    return parts["seen"], parts["unseen"]


def _read_features(root: Path, config: IngestConfig) -> np.ndarray:
    csv_path = root / "features.csv"
    bin_path = root / "features.bin"
    fmt = config.features_format
    if fmt == "auto":
        fmt = "csv" if csv_path.exists() else "bin"
    if fmt == "csv":
        if not csv_path.exists():
            raise FileNotFoundError(f"missing file: {csv_path}")
        mat = np.loadtxt(csv_path, delimiter=",", dtype=np.float64, ndmin=2)
        return mat
    if fmt == "bin":
        shape_path = root / "shape.txt"
        if not bin_path.exists():
            raise FileNotFoundError(f"missing file: {bin_path}")
        if not shape_path.exists():
            raise FileNotFoundError(f"missing file: {shape_path}")
        n, d = (int(tok) for tok in shape_path.read_text().split())
        raw = np.fromfile(bin_path, dtype="<f4")
        if raw.size != n * d:
            raise ValueError(
                f"features.bin holds {raw.size} values, shape.txt says {n}x{d}"
            )
        return raw.astype(np.float64).reshape(n, d)
    raise ValueError(f"unknown features_format: {config.features_format!r}")


def _read_labels(path: Path, n_expected: int) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"missing file: {path}")
    labels = np.loadtxt(path, dtype=np.int64, ndmin=1)
    if labels.shape != (n_expected,):
        raise ValueError(
            f"{path.name} has {labels.shape[0]} rows, expected {n_expected}"
        )
    return labels


def _read_semantic_table(path: Path, class_order: list[int]) -> np.ndarray:
    raw = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    ids = raw[:, 0].astype(np.int64)
    if len(set(ids.tolist())) != len(ids):
        dupes = sorted({int(i) for i in ids if np.sum(ids == i) > 1})
        raise ValueError(f"duplicate class row in semantic table {path.name}: {dupes}")
    if raw.shape[0] != len(class_order):
        raise ValueError(
            f"embedding row count mismatch in {path.name}: "
            f"expected {len(class_order)} rows, got {raw.shape[0]}"
        )
    by_id = {int(i): raw[k, 1:] for k, i in enumerate(ids)}
    missing = [c for c in class_order if c not in by_id]
    if missing:
        raise ValueError(f"semantic table {path.name} missing classes {missing}")
    return np.stack([by_id[c] for c in class_order])


# -- saving -------------------------------------------------------------


def save_dataset(ds: Dataset, dir_path, binary_features: bool = False) -> None:
    """Write ``ds`` in the directory layout ``load_dataset`` reads.

    Text floats are written with ``repr`` so a load/save/load cycle
    reproduces the same values bit for bit (binary features are float32 on
    disk and do not round-trip float64 exactly).
    """
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    if binary_features:
        ds.features.astype("<f4").tofile(root / "features.bin")
        (root / "shape.txt").write_text(f"{ds.n_samples} {ds.feature_dim}\n")
    else:
        _write_float_csv(root / "features.csv", ds.features)
    np.savetxt(root / "labels.csv", ds.labels, fmt="%d")
    if ds.labels_true is not None:
        np.savetxt(root / "labels_true.csv", ds.labels_true, fmt="%d")
    with open(root / "splits.csv", "w", encoding="utf-8") as fh:
        fh.write("seen: " + ",".join(str(c) for c in ds.seen_classes) + "\n")
        fh.write("unseen: " + ",".join(str(c) for c in ds.unseen_classes) + "\n")
    if ds.semantic_sources:
        sem_dir = root / "semantic"
        sem_dir.mkdir(exist_ok=True)
        for name, table in ds.semantic_sources.items():
            with open(sem_dir / f"{name}.csv", "w", encoding="utf-8") as fh:
                for cid, row in zip(ds.class_order, table):
                    fh.write(",".join([str(cid)] + [repr(float(v)) for v in row]) + "\n")


def _write_float_csv(path: Path, mat: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in mat:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


# -- prototypes ----------------------------------------------------------


@dataclass(frozen=True)
class ClassPrototypes:
    """Per-class representative vectors in one space.

    ``present[c]`` is False when no sample was assigned to class c (the
    prototype is then undefined and downstream graphs mask that column).
    """

    space: str
    vectors: dict[int, np.ndarray]
    present: dict[int, bool]

    def matrix(self, classes) -> np.ndarray:
        """Stack prototypes for ``classes``; undefined rows are zero."""
        dims = [v.shape[0] for v in self.vectors.values() if v is not None]
        if not dims:
            raise ValueError("no defined prototypes")
        dim = dims[0]
        rows = []
        for c in classes:
            v = self.vectors.get(int(c))
            rows.append(v if v is not None else np.zeros(dim))
        return np.stack(rows)

    def mask(self, classes) -> np.ndarray:
        return np.array([self.present[int(c)] for c in classes], dtype=bool)


def class_prototypes(features: np.ndarray, assignment: np.ndarray, classes, space: str = "image") -> ClassPrototypes:
    """Mean feature vector per class over the assigned samples.

    Summation runs in ascending sample-index order so recomputation with
    the same order reproduces each prototype bitwise.  Classes with no
    assigned samples get ``present`` False instead of raising; empty
    classes are expected in early propagation iterations.
    """
    features = np.asarray(features, dtype=np.float64)
    assignment = np.asarray(assignment, dtype=np.int64)
    if assignment.shape != (features.shape[0],):
        raise ValueError("assignment length must match sample count")
    class_set = {int(c) for c in classes}
    unknown = {int(a) for a in np.unique(assignment)} - class_set
    if unknown:
        raise ValueError(f"assignment references classes outside the set: {sorted(unknown)}")

    vectors: dict[int, np.ndarray] = {}
    present: dict[int, bool] = {}
    for c in classes:
        idx = np.flatnonzero(assignment == int(c))
        if idx.size == 0:
            vectors[int(c)] = None
            present[int(c)] = False
            continue
        acc = np.zeros(features.shape[1])
        for i in idx:  # serial, ascending order: keeps the mean reproducible
            acc += features[i]
        vectors[int(c)] = acc / idx.size
        present[int(c)] = True
    return ClassPrototypes(space=space, vectors=vectors, present=present)
