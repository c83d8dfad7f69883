"""Generalized zero-shot evaluation: per-class accuracy, U, S, and H."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import SoftmaxClassifier
from .data import DatasetBundle
from .errors import ArgumentError


def per_class_accuracy(pred: np.ndarray, truth: np.ndarray,
                       classes) -> dict[int, float]:
    """Fraction of each class's instances predicted correctly.

    Classes with no instances in ``truth`` are left out of the map.
    """
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if truth.size == 0:
        raise ArgumentError("empty truth labels")
    if pred.shape != truth.shape:
        raise ArgumentError(f"{pred.shape} predictions vs {truth.shape} truths")
    class_set = {int(c) for c in classes}
    stray = [int(c) for c in np.unique(truth) if int(c) not in class_set]
    if stray:
        raise ArgumentError(f"truth labels {stray} outside the class set")
    out: dict[int, float] = {}
    for c in sorted(class_set):
        members = truth == c
        if members.any():
            out[c] = float(np.mean(pred[members] == c))
    return out


def harmonic_mean(s: float, u: float) -> float:
    """2SU/(S+U); zero when both accuracies are zero."""
    if s < 0 or u < 0:
        raise ArgumentError(f"negative accuracy: S={s}, U={u}")
    if s + u == 0:
        return 0.0
    return 2.0 * s * u / (s + u)


@dataclass
class GzslMetrics:
    per_class_acc: dict[int, float]
    u: float
    s: float
    h: float

    def to_dict(self) -> dict:
        return {
            "U": self.u,
            "S": self.s,
            "H": self.h,
            "per_class": {str(c): acc for c, acc in sorted(self.per_class_acc.items())},
        }

    def write_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        return path

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("metric,value\n")
            fh.write(f"U,{self.u!r}\n")
            fh.write(f"S,{self.s!r}\n")
            fh.write(f"H,{self.h!r}\n")
            for c, acc in sorted(self.per_class_acc.items()):
                fh.write(f"class_{c},{acc!r}\n")
        return path


def evaluate_gzsl(classifier: SoftmaxClassifier, bundle: DatasetBundle) -> GzslMetrics:
    """Mean per-class accuracy over seen (S) and unseen (U) test splits, and H."""
    seen_idx = bundle.indices("test_seen")
    unseen_idx = bundle.indices("test_unseen")
    if seen_idx.size == 0 or unseen_idx.size == 0:
        raise ArgumentError("empty test split")
    all_classes = np.union1d(bundle.seen_classes, bundle.unseen_classes)
    acc_seen = per_class_accuracy(classifier.predict(bundle.features[seen_idx]),
                                  bundle.labels[seen_idx], all_classes)
    acc_unseen = per_class_accuracy(classifier.predict(bundle.features[unseen_idx]),
                                    bundle.labels[unseen_idx], all_classes)
    s = float(np.mean([acc_seen[c] for c in sorted(acc_seen)]))
    u = float(np.mean([acc_unseen[c] for c in sorted(acc_unseen)]))
    per_class = dict(sorted({**acc_seen, **acc_unseen}.items()))
    return GzslMetrics(per_class_acc=per_class, u=u, s=s, h=harmonic_mean(s, u))
