"""Feature synthesis for target classes and the final classifier.

Each target class gets ``n_complete_per_class`` draws from its complete
attribute plus ``round(ratio * n_complete_per_class)`` draws per masked
group; provenance records which variant produced each row. The final
classifier trains on real seen features plus the synthesized set.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augmentation import mask_group
from .classifier import SoftmaxClassifier, train_softmax_classifier
from .data import DatasetBundle
from .errors import LoadError, StateError, ValidationError, WriteError
from .gan import DiverseFeatureGan
from .rng import derive_rng


@dataclass
class SynthesisPlan:
    n_complete_per_class: int
    ratio_per_group: float          # masked rows per group = round(ratio * n_complete)
    target_classes: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.target_classes = np.sort(np.asarray(self.target_classes, dtype=np.int64))
        if self.n_complete_per_class < 1:
            raise ValidationError("n_complete_per_class must be >= 1")
        if self.ratio_per_group < 0:
            raise ValidationError("ratio_per_group must be >= 0")
        if self.ratio_per_group >= 10:
            raise ValidationError(
                f"ratio_per_group={self.ratio_per_group} fails the sanity bound (< 10)")
        if self.target_classes.size == 0:
            raise ValidationError("no target classes")

    @property
    def n_per_group(self) -> int:
        return int(math.floor(self.ratio_per_group * self.n_complete_per_class + 0.5))


@dataclass
class SynthesizedSet:
    features: np.ndarray    # (n, d_x)
    labels: np.ndarray      # (n,) class ids
    provenance: np.ndarray  # (n,) variant index 0..m

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.provenance = np.asarray(self.provenance, dtype=np.int64)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]


def synthesize_features(model: DiverseFeatureGan, attributes: np.ndarray,
                        plan: SynthesisPlan) -> SynthesizedSet:
    """Generate complete plus masked features per target class, seeded."""
    if not model.trained:
        raise StateError("synthesize_features needs a trained model")
    attributes = np.atleast_2d(attributes)
    if plan.target_classes.max() >= attributes.shape[0]:
        raise ValidationError(
            f"target class {int(plan.target_classes.max())} has no attribute row")

    blocks, labels, provenance = [], [], []
    n_group = plan.n_per_group
    for c in plan.target_classes:
        for i in range(model.groups.m + 1):
            count = plan.n_complete_per_class if i == 0 else n_group
            if count == 0:
                continue
            a_i = mask_group(attributes[c], model.groups, i)
            z = derive_rng(plan.seed, "synthesize", int(c), i).standard_normal(
                (count, model.d_z))
            blocks.append(model.generate(np.tile(a_i, (count, 1)), z))
            labels.append(np.full(count, c, dtype=np.int64))
            provenance.append(np.full(count, i, dtype=np.int64))
    return SynthesizedSet(features=np.concatenate(blocks, axis=0),
                          labels=np.concatenate(labels),
                          provenance=np.concatenate(provenance))


def train_final_classifier(bundle: DatasetBundle, synthetic: SynthesizedSet,
                           epochs: int, learning_rate: float, seed: int,
                           batch_size: int = 64) -> SoftmaxClassifier:
    """Softmax classifier over seen + unseen classes on real + synthetic rows."""
    covered = set(np.unique(synthetic.labels).tolist())
    missing = [int(c) for c in bundle.unseen_classes if int(c) not in covered]
    if missing:
        raise ValidationError(f"unseen class with zero synthetic rows: {missing}")
    idx = bundle.indices("train_seen")
    if idx.size == 0:
        raise ValidationError("train_seen split is empty")
    features = np.concatenate([bundle.features[idx], synthetic.features], axis=0)
    labels = np.concatenate([bundle.labels[idx], synthetic.labels])
    class_ids = np.union1d(bundle.seen_classes, bundle.unseen_classes)
    return train_softmax_classifier(features, labels, class_ids, epochs=epochs,
                                    learning_rate=learning_rate, seed=seed,
                                    batch_size=batch_size, name="final_classifier")


def save_synthesized(synth: SynthesizedSet, path: str | Path) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            d_x = synth.features.shape[1]
            writer.writerow(["label", "provenance"] + [f"x{j}" for j in range(d_x)])
            for lab, prov, row in zip(synth.labels, synth.provenance, synth.features):
                writer.writerow([str(int(lab)), str(int(prov))]
                                + [repr(float(v)) for v in row])
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc
    return path


def load_synthesized(path: str | Path) -> SynthesizedSet:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"missing file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        labels, provenance, rows = [], [], []
        for record in reader:
            labels.append(int(record[0]))
            provenance.append(int(record[1]))
            rows.append([float(v) for v in record[2:]])
    return SynthesizedSet(features=np.asarray(rows, dtype=np.float64),
                          labels=np.asarray(labels, dtype=np.int64),
                          provenance=np.asarray(provenance, dtype=np.int64))
