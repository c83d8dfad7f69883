"""Dataset model, on-disk formats, and the synthetic desk-scale benchmark.

A dataset lives on disk as a JSON manifest referencing CSV files (features,
labels, attributes, splits, optional embeddings). All reals are serialized
with shortest round-trip decimals so save -> load is the identity bitwise.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import LoadError, ShapeError, ValidationError, WriteError
from .rng import derive_rng

BUCKETS = ("train_seen", "test_seen", "test_unseen")

# Within-group coherence of synthetic class attributes. Nonzero so that the
# value profile of an attribute dimension across classes carries its group,
# which keeps the no-word-vector clustering fallback meaningful.
_GROUP_COHERENCE = 0.75
_EMBED_JITTER = 0.05
_EMBED_SCALE = 4.0


@dataclass
class DatasetBundle:
    """In-memory dataset: instance features/labels, class attributes, splits."""

    features: np.ndarray          # (n_instances, d_x) float64
    labels: np.ndarray            # (n_instances,) int64 class ids
    attributes: np.ndarray        # (n_classes, d_a) float64 in [0, 1]
    attribute_names: list[str]
    seen_classes: np.ndarray      # sorted int64
    unseen_classes: np.ndarray    # sorted int64
    split: np.ndarray             # (n_instances,) bucket names
    normalization_record: dict | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.attributes = np.asarray(self.attributes, dtype=np.float64)
        self.seen_classes = np.sort(np.asarray(self.seen_classes, dtype=np.int64))
        self.unseen_classes = np.sort(np.asarray(self.unseen_classes, dtype=np.int64))
        self.split = np.asarray(self.split, dtype="U11")
        self.attribute_names = list(self.attribute_names)

    @property
    def n_instances(self) -> int:
        return self.features.shape[0]

    @property
    def d_x(self) -> int:
        return self.features.shape[1]

    @property
    def d_a(self) -> int:
        return self.attributes.shape[1]

    @property
    def n_classes(self) -> int:
        return self.attributes.shape[0]

    def indices(self, bucket: str) -> np.ndarray:
        if bucket not in BUCKETS:
            raise ValidationError(f"unknown split bucket {bucket!r}")
        return np.flatnonzero(self.split == bucket)

    def equals(self, other: "DatasetBundle") -> bool:
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.attributes, other.attributes)
            and self.attribute_names == other.attribute_names
            and np.array_equal(self.seen_classes, other.seen_classes)
            and np.array_equal(self.unseen_classes, other.unseen_classes)
            and np.array_equal(self.split, other.split)
        )


@dataclass
class EmbeddingTable:
    """One vector per attribute dimension (word vectors or a fallback)."""

    vectors: np.ndarray   # (d_a, d_w) float64
    names: list[str]

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.names = list(self.names)

    @property
    def d_a(self) -> int:
        return self.vectors.shape[0]

    @property
    def d_w(self) -> int:
        return self.vectors.shape[1]


@dataclass
class SyntheticSpec:
    """Configuration for the synthetic missing-attribute benchmark."""

    d_a: int = 20
    d_x: int = 24
    m_true: int = 4
    n_seen_classes: int = 10
    n_unseen_classes: int = 4
    instances_per_class: int = 20
    p_miss: float = 0.5
    noise_sigma: float = 0.02
    seed: int = 0


def validate_bundle(bundle: DatasetBundle) -> None:
    """Check every DatasetBundle invariant; raise ValidationError/ShapeError."""
    n = bundle.n_instances
    if bundle.labels.shape != (n,):
        raise ShapeError(
            f"labels has shape {bundle.labels.shape}, expected ({n},)")
    if bundle.split.shape != (n,):
        raise ShapeError(
            f"splits cover {bundle.split.shape[0]} instances, expected {n}")
    if bundle.d_a < 2:
        raise ValidationError(f"need at least 2 attribute dimensions, got {bundle.d_a}")
    if len(bundle.attribute_names) != bundle.d_a:
        raise ShapeError(
            f"{len(bundle.attribute_names)} attribute names for {bundle.d_a} dimensions")
    if not np.all(np.isfinite(bundle.features)):
        raise ValidationError("non-finite feature value")
    if not np.all(np.isfinite(bundle.attributes)):
        raise ValidationError("non-finite attribute value")
    if np.any(bundle.attributes < 0.0) or np.any(bundle.attributes > 1.0):
        raise ValidationError(
            "attribute values outside [0, 1]; declare minmax normalization in the manifest")
    if bundle.seen_classes.size == 0:
        raise ValidationError("no seen classes")
    if bundle.unseen_classes.size == 0:
        raise ValidationError("no unseen classes")
    overlap = np.intersect1d(bundle.seen_classes, bundle.unseen_classes)
    if overlap.size:
        raise ValidationError(f"overlapping class sets: {overlap.tolist()}")
    known = np.union1d(bundle.seen_classes, bundle.unseen_classes)
    if known.size and (known.min() < 0 or known.max() >= bundle.n_classes):
        missing = [int(c) for c in known if c < 0 or c >= bundle.n_classes]
        raise ValidationError(f"class without attribute row: {missing}")
    stray = np.setdiff1d(bundle.labels, known)
    if stray.size:
        raise ValidationError(
            f"labels outside seen/unseen class sets: {stray.tolist()}")
    bad_bucket = np.setdiff1d(bundle.split, np.asarray(BUCKETS))
    if bad_bucket.size:
        raise ValidationError(f"unknown split bucket {bad_bucket.tolist()}")
    seen_set = set(bundle.seen_classes.tolist())
    for bucket, classes in (
        ("train_seen", seen_set),
        ("test_seen", seen_set),
        ("test_unseen", set(bundle.unseen_classes.tolist())),
    ):
        labels = bundle.labels[bundle.indices(bucket)]
        bad = [int(c) for c in np.unique(labels) if int(c) not in classes]
        if bad:
            raise ValidationError(f"{bucket} instances with labels {bad} outside its class set")


def validate_embeddings(table: EmbeddingTable, d_a: int | None = None) -> None:
    if table.vectors.ndim != 2:
        raise ShapeError(f"embedding matrix must be 2-d, got {table.vectors.ndim}-d")
    if d_a is not None and table.d_a != d_a:
        raise ShapeError(f"{table.d_a} embedding rows for {d_a} attribute dimensions")
    if table.d_w < 2:
        raise ValidationError(f"embedding width must be >= 2, got {table.d_w}")
    if len(table.names) != table.d_a:
        raise ShapeError(f"{len(table.names)} names for {table.d_a} embedding rows")
    if not np.all(np.isfinite(table.vectors)):
        raise ValidationError("non-finite embedding value")


def validate_synthetic_spec(spec: SyntheticSpec) -> None:
    if spec.d_a < 2 or spec.d_x < 1:
        raise ValidationError("d_a must be >= 2 and d_x >= 1")
    if spec.m_true < 1 or spec.d_a % spec.m_true != 0:
        raise ValidationError(
            f"m_true={spec.m_true} must be >= 1 and divide d_a={spec.d_a}")
    if spec.n_seen_classes < 1 or spec.n_unseen_classes < 1:
        raise ValidationError("need at least one seen and one unseen class")
    if spec.instances_per_class < 1:
        raise ValidationError("instances_per_class must be >= 1")
    if not 0.0 <= spec.p_miss <= 1.0:
        raise ValidationError(f"p_miss={spec.p_miss} outside [0, 1]")
    if spec.noise_sigma < 0.0:
        raise ValidationError("noise_sigma must be >= 0")


# ---------------------------------------------------------------------------
# CSV / manifest io


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    if not path.exists():
        raise LoadError(f"missing file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LoadError(f"empty file: {path}") from None
        return header, [row for row in reader if row]


def _matrix_rows(mat: np.ndarray):
    for row in mat:
        yield [_fmt(v) for v in row]


def save_dataset(bundle: DatasetBundle, out_dir: str | Path) -> Path:
    """Write the manifest plus CSV files; returns the manifest path."""
    validate_bundle(bundle)
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise WriteError(f"cannot create {out_dir}: {exc}") from exc

    _write_csv(out_dir / "features.csv",
               [f"x{j}" for j in range(bundle.d_x)],
               _matrix_rows(bundle.features))
    _write_csv(out_dir / "labels.csv", ["instance_index", "label"],
               ([str(i), str(int(c))] for i, c in enumerate(bundle.labels)))
    _write_csv(out_dir / "attributes.csv", ["class_id"] + bundle.attribute_names,
               ([str(c)] + [_fmt(v) for v in row]
                for c, row in enumerate(bundle.attributes)))
    _write_csv(out_dir / "splits.csv", ["instance_index", "bucket"],
               ([str(i), b] for i, b in enumerate(bundle.split)))

    manifest = {
        "format_version": 1,
        "features": "features.csv",
        "labels": "labels.csv",
        "attributes": "attributes.csv",
        "splits": "splits.csv",
        "seen_classes": [int(c) for c in bundle.seen_classes],
        "unseen_classes": [int(c) for c in bundle.unseen_classes],
        # Values on disk are already on the masking scale.
        "normalization": "none",
    }
    if bundle.normalization_record is not None:
        manifest["normalization_applied"] = bundle.normalization_record
    manifest_path = out_dir / "manifest.json"
    try:
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                 encoding="utf-8")
    except OSError as exc:
        raise WriteError(f"cannot write {manifest_path}: {exc}") from exc
    return manifest_path


def save_embeddings(table: EmbeddingTable, manifest_path: str | Path) -> Path:
    """Attach an embeddings CSV to an existing dataset manifest."""
    manifest_path = Path(manifest_path)
    manifest = _read_manifest(manifest_path)
    path = manifest_path.parent / "embeddings.csv"
    _write_csv(path, ["attribute"] + [f"e{j}" for j in range(table.d_w)],
               ([name] + [_fmt(v) for v in row]
                for name, row in zip(table.names, table.vectors)))
    manifest["embeddings"] = "embeddings.csv"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
    return path


def _read_manifest(manifest_path: Path) -> dict:
    if not manifest_path.exists():
        raise LoadError(f"missing file: {manifest_path}")
    try:
        return json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise LoadError(f"malformed manifest {manifest_path}: {exc}") from exc


def _parse_matrix(header: list[str], rows: list[list[str]], path: Path) -> np.ndarray:
    width = len(header)
    out = np.empty((len(rows), width), dtype=np.float64)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ShapeError(f"{path}: row {i} has {len(row)} fields, header has {width}")
        out[i] = [float(v) for v in row]
    return out


def load_dataset(manifest_path: str | Path) -> DatasetBundle:
    """Load and validate a dataset bundle from its manifest."""
    manifest_path = Path(manifest_path)
    manifest = _read_manifest(manifest_path)
    base = manifest_path.parent
    for key in ("features", "labels", "attributes", "splits"):
        if key not in manifest:
            raise LoadError(f"manifest {manifest_path} missing key {key!r}")

    header, rows = _read_csv(base / manifest["features"])
    features = _parse_matrix(header, rows, base / manifest["features"])

    _, label_rows = _read_csv(base / manifest["labels"])
    labels = np.full(len(label_rows), -1, dtype=np.int64)
    for idx_s, lab_s in label_rows:
        labels[int(idx_s)] = int(lab_s)

    attr_header, attr_rows = _read_csv(base / manifest["attributes"])
    attr_names = attr_header[1:]
    class_ids = [int(r[0]) for r in attr_rows]
    if sorted(class_ids) != list(range(len(class_ids))):
        raise ValidationError(
            f"attribute class_id column must enumerate 0..{len(class_ids) - 1}")
    attributes = np.empty((len(attr_rows), len(attr_names)), dtype=np.float64)
    for row in attr_rows:
        attributes[int(row[0])] = [float(v) for v in row[1:]]

    _, split_rows = _read_csv(base / manifest["splits"])
    if len(split_rows) != len(label_rows):
        raise ShapeError(
            f"splits list {len(split_rows)} instances, labels list {len(label_rows)}")
    split = np.empty(len(split_rows), dtype="U11")
    seen_rows = np.zeros(len(split_rows), dtype=bool)
    for idx_s, bucket in split_rows:
        i = int(idx_s)
        if seen_rows[i]:
            raise ValidationError(f"instance {i} assigned to more than one split bucket")
        seen_rows[i] = True
        split[i] = bucket
    if not seen_rows.all():
        raise ValidationError(
            f"instances without split bucket: {np.flatnonzero(~seen_rows).tolist()}")

    record = manifest.get("normalization_applied")
    if manifest.get("normalization", "none") == "minmax":
        attributes, record = normalize_attributes(attributes)

    bundle = DatasetBundle(
        features=features,
        labels=labels,
        attributes=attributes,
        attribute_names=attr_names,
        seen_classes=np.asarray(manifest.get("seen_classes", []), dtype=np.int64),
        unseen_classes=np.asarray(manifest.get("unseen_classes", []), dtype=np.int64),
        split=split,
        normalization_record=record,
    )
    validate_bundle(bundle)
    return bundle


def load_embeddings(manifest_path: str | Path) -> EmbeddingTable | None:
    """Load the word-vector table referenced by a manifest, if any."""
    manifest_path = Path(manifest_path)
    manifest = _read_manifest(manifest_path)
    if "embeddings" not in manifest:
        return None
    path = manifest_path.parent / manifest["embeddings"]
    header, rows = _read_csv(path)
    names = [r[0] for r in rows]
    vectors = _parse_matrix(header[1:], [r[1:] for r in rows], path)
    table = EmbeddingTable(vectors=vectors, names=names)
    validate_embeddings(table)
    return table


def normalize_attributes(attributes: np.ndarray) -> tuple[np.ndarray, dict]:
    """Min-max scale each attribute dimension over classes into [0, 1].

    Zero is the masking value, so dimensions are anchored at their minimum;
    constant dimensions collapse to 0. Returns the scaled matrix plus the
    applied transform for the manifest.
    """
    mins = attributes.min(axis=0)
    ranges = attributes.max(axis=0) - mins
    scaled = np.zeros_like(attributes)
    nz = ranges > 0
    scaled[:, nz] = (attributes[:, nz] - mins[nz]) / ranges[nz]
    record = {"mode": "minmax", "mins": mins.tolist(), "ranges": ranges.tolist()}
    return scaled, record


# ---------------------------------------------------------------------------
# Synthetic benchmark


def ground_truth_partition(spec: SyntheticSpec) -> np.ndarray:
    """Contiguous equal-size blocks of attribute dimensions, 1-based groups."""
    block = spec.d_a // spec.m_true
    return np.arange(spec.d_a) // block + 1


def generate_synthetic_benchmark(
    spec: SyntheticSpec,
) -> tuple[DatasetBundle, EmbeddingTable, np.ndarray]:
    """Build the desk-scale benchmark with a known attribute-group structure.

    Instances are rectifier(W @ (a_c * mask)) + gaussian noise, where with
    probability p_miss the mask zeroes one uniformly chosen ground-truth
    group. Embedding rows cluster tightly around per-group centroids, so
    clustering them with m = m_true recovers the partition.
    """
    validate_synthetic_spec(spec)
    groups = ground_truth_partition(spec)
    n_classes = spec.n_seen_classes + spec.n_unseen_classes

    rng = derive_rng(spec.seed, "attributes")
    group_base = rng.uniform(size=(n_classes, spec.m_true))
    residual = rng.uniform(size=(n_classes, spec.d_a))
    attributes = ((1.0 - _GROUP_COHERENCE) * residual
                  + _GROUP_COHERENCE * group_base[:, groups - 1])

    feature_map = derive_rng(spec.seed, "feature_map").standard_normal(
        (spec.d_x, spec.d_a)) / np.sqrt(spec.d_a)

    n = n_classes * spec.instances_per_class
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), spec.instances_per_class)

    mask_rng = derive_rng(spec.seed, "masks")
    miss = mask_rng.uniform(size=n) < spec.p_miss
    miss_group = mask_rng.integers(1, spec.m_true + 1, size=n)
    masked_attr = attributes[labels].copy()
    for i in np.flatnonzero(miss):
        masked_attr[i, groups == miss_group[i]] = 0.0

    noise = derive_rng(spec.seed, "noise").standard_normal((n, spec.d_x))
    features = np.maximum(masked_attr @ feature_map.T, 0.0) + spec.noise_sigma * noise

    d_w = max(4, spec.m_true)
    basis_rng = derive_rng(spec.seed, "embedding_centroids")
    q, _ = np.linalg.qr(basis_rng.standard_normal((d_w, d_w)))
    centroids = _EMBED_SCALE * q[: spec.m_true]
    jitter = derive_rng(spec.seed, "embedding_jitter").standard_normal((spec.d_a, d_w))
    names = [f"attr_{j:03d}" for j in range(spec.d_a)]
    table = EmbeddingTable(vectors=centroids[groups - 1] + _EMBED_JITTER * jitter,
                           names=names)

    split = np.empty(n, dtype="U11")
    split[:] = "test_unseen"
    per = spec.instances_per_class
    n_train = int(round(0.8 * per))
    n_train = min(max(n_train, 1), per - 1) if per > 1 else 1
    for c in range(spec.n_seen_classes):
        idx = np.flatnonzero(labels == c)
        order = derive_rng(spec.seed, "split", c).permutation(per)
        split[idx[order[:n_train]]] = "train_seen"
        split[idx[order[n_train:]]] = "test_seen"

    bundle = DatasetBundle(
        features=features,
        labels=labels,
        attributes=attributes,
        attribute_names=names,
        seen_classes=np.arange(spec.n_seen_classes, dtype=np.int64),
        unseen_classes=np.arange(spec.n_seen_classes, n_classes, dtype=np.int64),
        split=split,
    )
    validate_bundle(bundle)
    validate_embeddings(table, d_a=spec.d_a)
    return bundle, table, groups


def save_ground_truth_groups(groups: np.ndarray, names: list[str],
                             manifest_path: str | Path) -> Path:
    """Record the generator's partition next to the dataset for later checks."""
    manifest_path = Path(manifest_path)
    manifest = _read_manifest(manifest_path)
    path = manifest_path.parent / "ground_truth_groups.csv"
    _write_csv(path, ["attribute", "group_index"],
               ([name, str(int(g))] for name, g in zip(names, groups)))
    manifest["ground_truth_groups"] = "ground_truth_groups.csv"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
    return path


def load_ground_truth_groups(manifest_path: str | Path) -> np.ndarray | None:
    manifest_path = Path(manifest_path)
    manifest = _read_manifest(manifest_path)
    if "ground_truth_groups" not in manifest:
        return None
    _, rows = _read_csv(manifest_path.parent / manifest["ground_truth_groups"])
    return np.asarray([int(r[1]) for r in rows], dtype=np.int64)
