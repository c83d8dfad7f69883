"""Softmax classifiers over feature vectors.

One affine layer trained by cross-entropy with minibatch adaptive-moment
updates. Used twice: the frozen seen-class classifier that guides the
generator, and the final classifier over seen + unseen classes.
"""

from __future__ import annotations

import numpy as np

from .data import DatasetBundle
from .errors import ArgumentError, ValidationError
from .nn import Network, NetworkSpec, init_adam, optimizer_step
from .rng import derive_rng


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray,
                          targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    logits = np.atleast_2d(logits)
    targets = np.asarray(targets, dtype=np.int64)
    n, c = logits.shape
    if targets.shape != (n,):
        raise ArgumentError(f"{targets.shape} targets for {n} logit rows")
    if targets.min() < 0 or targets.max() >= c:
        raise ArgumentError(f"target outside 0..{c - 1}")
    logp = log_softmax(logits)
    loss = float(-logp[np.arange(n), targets].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(n), targets] -= 1.0
    return loss, dlogits / n


class SoftmaxClassifier:
    """Affine + softmax over an explicit class-id list."""

    def __init__(self, net: Network, class_ids: np.ndarray):
        self.net = net
        self.class_ids = np.asarray(class_ids, dtype=np.int64)
        self.train_accuracy: float | None = None

    def logits(self, features: np.ndarray) -> np.ndarray:
        return self.net.forward(np.atleast_2d(features))

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.class_ids[np.argmax(self.logits(features), axis=1)]

    def class_index(self, labels: np.ndarray) -> np.ndarray:
        """Map class ids to logit indices; raises on unknown classes."""
        labels = np.asarray(labels, dtype=np.int64)
        idx = np.searchsorted(self.class_ids, labels)
        ok = (idx < self.class_ids.size) & (self.class_ids[np.minimum(idx, self.class_ids.size - 1)] == labels)
        if not np.all(ok):
            raise ArgumentError(f"labels {np.unique(labels[~ok]).tolist()} not covered by classifier")
        return idx


def train_softmax_classifier(features: np.ndarray, labels: np.ndarray,
                             class_ids: np.ndarray, epochs: int,
                             learning_rate: float, seed: int,
                             batch_size: int = 64, weight_decay: float = 0.0,
                             name: str = "classifier") -> SoftmaxClassifier:
    """Train an affine softmax classifier; deterministic given the seed."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    class_ids = np.sort(np.unique(np.asarray(class_ids, dtype=np.int64)))
    if class_ids.size < 2:
        raise ValidationError(f"need at least 2 classes, got {class_ids.size}")
    if features.shape[0] != labels.shape[0]:
        raise ValidationError(f"{features.shape[0]} rows vs {labels.shape[0]} labels")
    if features.shape[0] == 0:
        raise ValidationError("empty training set")

    spec = NetworkSpec(layer_dims=(features.shape[1], class_ids.size),
                       output_activation="none", name=name)
    clf = SoftmaxClassifier(Network.initialize(spec, seed), class_ids)
    targets = clf.class_index(labels)
    state = init_adam(clf.net.parameters(), learning_rate, weight_decay=weight_decay)

    n = features.shape[0]
    for epoch in range(epochs):
        order = derive_rng(seed, "shuffle", name, epoch).permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            logits = clf.net.forward(features[batch])
            _, dlogits = softmax_cross_entropy(logits, targets[batch])
            grads, _ = clf.net.gradients(dlogits)
            optimizer_step(clf.net.parameters(), grads.as_list(), state)

    clf.train_accuracy = float(np.mean(clf.predict(features) == labels))
    return clf


def pretrain_seen_classifier(bundle: DatasetBundle, epochs: int = 100,
                             learning_rate: float = 1e-2, seed: int = 0,
                             batch_size: int = 64) -> SoftmaxClassifier:
    """Cross-entropy classifier over the seen classes, fit on train_seen."""
    if bundle.seen_classes.size < 2:
        raise ValidationError(
            f"need at least 2 seen classes, got {bundle.seen_classes.size}")
    idx = bundle.indices("train_seen")
    if idx.size == 0:
        raise ValidationError("train_seen split is empty")
    labels = bundle.labels[idx]
    present = set(np.unique(labels).tolist())
    missing = [int(c) for c in bundle.seen_classes if int(c) not in present]
    if missing:
        raise ValidationError(f"class with zero training instances: {missing}")
    return train_softmax_classifier(
        bundle.features[idx], labels, bundle.seen_classes,
        epochs=epochs, learning_rate=learning_rate, seed=seed,
        batch_size=batch_size, name="seen_classifier")
