"""Conditional WGAN-GP training with masked-attribute diversity terms.

The critic sees (feature, attribute) pairs; fakes are generated from each
masked attribute variant. On top of the complete-attribute backbone loss,
the masked variants contribute an averaged adversarial term (weighted by
``lambda_div``) and a mask-classification term (weighted by ``lambda_self``)
that co-trains a one-layer head to recognize which group was masked.

``plain_train`` is the textbook conditional WGAN-GP loop kept alongside as
the reference the augmented path must reduce to when every added weight is
zero, bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augmentation import mask_group
from .classifier import SoftmaxClassifier, softmax_cross_entropy
from .data import DatasetBundle
from .errors import ArgumentError, LoadError, ShapeError, TrainingError, ValidationError
from .grouping import AttributeGroups
from .nn import (
    Gradients,
    Network,
    NetworkSpec,
    init_adam,
    load_checkpoint,
    optimizer_step,
    penalty_gradients,
    save_checkpoint,
)
from .rng import derive_rng, stream_key


@dataclass
class LossWeights:
    lambda_gp: float = 10.0      # gradient-penalty coefficient
    lambda_div: float = 1.0      # masked-variant adversarial terms
    lambda_self: float = 1.0     # mask-classification term
    beta_cls: float = 0.01       # frozen seen-classifier guidance
    critic_steps: int = 5

    def __post_init__(self):
        for name in ("lambda_gp", "lambda_div", "lambda_self", "beta_cls"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.critic_steps < 1:
            raise ValidationError("critic_steps must be >= 1")


@dataclass
class TrainSettings:
    epochs: int
    batch_size: int = 64
    lr_generator: float = 1e-3
    lr_critic: float = 1e-3
    seed: int = 0
    weight_decay_generator: float = 1e-4
    checkpoint_every: int = 0
    checkpoint_dir: str | Path | None = None
    sampled_mask_mode: bool = False


class DiverseFeatureGan:
    """Generator + critic + mask head + frozen seen classifier."""

    def __init__(self, generator: Network, critic: Network, mask_head: Network,
                 seen_classifier: SoftmaxClassifier, groups: AttributeGroups,
                 weights: LossWeights, d_z: int,
                 self_sup_includes_complete: bool = True,
                 detach_self_sup: bool = False):
        if mask_head.n_outputs != groups.m + 1:
            raise ShapeError(
                f"mask head has {mask_head.n_outputs} outputs for m={groups.m}")
        self.generator = generator
        self.critic = critic
        self.mask_head = mask_head
        self.seen_classifier = seen_classifier
        self.groups = groups
        self.weights = weights
        self.d_z = d_z
        self.self_sup_includes_complete = self_sup_includes_complete
        self.detach_self_sup = detach_self_sup
        self.trained = False

    @property
    def d_x(self) -> int:
        return self.generator.n_outputs

    @property
    def d_a(self) -> int:
        return self.groups.d_a

    def generate(self, attributes: np.ndarray, z: np.ndarray) -> np.ndarray:
        return self.generator.forward(np.concatenate([np.atleast_2d(attributes),
                                                      np.atleast_2d(z)], axis=1))


def build_model(d_x: int, groups: AttributeGroups,
                seen_classifier: SoftmaxClassifier, weights: LossWeights,
                seed: int, hidden_dim: int = 256, d_z: int | None = None,
                self_sup_includes_complete: bool = True,
                detach_self_sup: bool = False) -> DiverseFeatureGan:
    """Construct the networks with seeded initialization."""
    d_a = groups.d_a
    if d_z is None:
        d_z = d_a
    generator = Network.initialize(
        NetworkSpec((d_a + d_z, hidden_dim, d_x), output_activation="relu",
                    name="generator"), seed)
    critic = Network.initialize(
        NetworkSpec((d_x + d_a, hidden_dim, 1), output_activation="none",
                    name="critic"), seed)
    mask_head = Network.initialize(
        NetworkSpec((d_x, groups.m + 1), output_activation="none",
                    name="mask_head"), seed)
    return DiverseFeatureGan(generator, critic, mask_head, seen_classifier,
                             groups, weights, d_z,
                             self_sup_includes_complete=self_sup_includes_complete,
                             detach_self_sup=detach_self_sup)


def _masked_variants(model: DiverseFeatureGan, noise_seed: int) -> list[int]:
    if model.weights.lambda_div == 0.0 and model.weights.lambda_self == 0.0:
        return []
    if getattr(model, "_sampled_mask_mode", False):
        pick = int(derive_rng(noise_seed, "mask_choice").integers(1, model.groups.m + 1))
        return [pick]
    return list(range(1, model.groups.m + 1))


def critic_loss(model: DiverseFeatureGan, real_x: np.ndarray, real_a: np.ndarray,
                noise_seed: int) -> tuple[dict, Gradients]:
    """Critic loss to minimize and its parameter gradients.

    backbone:   mean D(x0', a) + gp0 - mean D(x, a)
    diversity:  lambda_div * ((1/m) sum_i [mean D(xi', ai) + gp_i] - mean D(x, a))
    where the real term is evaluated once per batch and the penalty for
    variant i is conditioned on the masked attribute ai.
    """
    w = model.weights
    real_x = np.atleast_2d(real_x)
    real_a = np.atleast_2d(real_a)
    batch = real_x.shape[0]
    grads = Gradients.zeros_like(model.critic)

    fake_gp_sum = 0.0
    variant_fake_means: list[float] = []
    variant_gps: list[float] = []

    variants = [0] + (_masked_variants(model, noise_seed) if w.lambda_div > 0 else [])
    for i in variants:
        a_i = real_a if i == 0 else mask_group(real_a, model.groups, i)
        z = derive_rng(noise_seed, "critic_z", i).standard_normal((batch, model.d_z))
        fake = model.generate(a_i, z)
        out = model.critic.forward(np.concatenate([fake, a_i], axis=1))
        fake_mean = float(np.mean(out))
        weight = 1.0 if i == 0 else w.lambda_div / (len(variants) - 1)
        g, _ = model.critic.gradients(np.full((batch, 1), weight / batch))
        grads.add_scaled(g)
        alpha = derive_rng(noise_seed, "critic_alpha", i).uniform(size=(batch, 1))
        inter = alpha * real_x + (1.0 - alpha) * fake
        gp, gp_grads = penalty_gradients(model.critic, inter, a_i, w.lambda_gp)
        grads.add_scaled(gp_grads, weight)
        if i == 0:
            fake0_mean, gp0 = fake_mean, gp
        else:
            fake_gp_sum += weight * (fake_mean + gp)
        variant_fake_means.append(fake_mean)
        variant_gps.append(gp)

    diversity_active = len(variants) > 1
    real_coeff = 1.0 + (w.lambda_div if diversity_active else 0.0)
    real_out = model.critic.forward(np.concatenate([real_x, real_a], axis=1))
    real_mean = float(np.mean(real_out))
    g, _ = model.critic.gradients(np.full((batch, 1), -real_coeff / batch))
    grads.add_scaled(g)

    wass = fake0_mean - real_mean
    div_value = fake_gp_sum - w.lambda_div * real_mean if diversity_active else 0.0
    terms = {
        "critic_fake": fake0_mean,
        "critic_real": real_mean,
        "critic_wass": wass,
        "critic_gp": gp0,
        "critic_div": div_value,
        "critic_total": wass + gp0 + div_value,
        "_variant_fake": variant_fake_means,
        "_variant_gp": variant_gps,
    }
    return terms, grads


def generator_loss(model: DiverseFeatureGan, a_batch: np.ndarray,
                   labels: np.ndarray, noise_seed: int
                   ) -> tuple[dict, Gradients, Gradients]:
    """Generator-side loss, its generator gradients, and mask-head gradients.

    loss = -mean D(x0', a) + beta_cls * CE(seen(x0'), y)
         + lambda_div * (1/m) sum_i [-mean D(xi', ai) + beta_cls * CE(seen(xi'), y)]
         + lambda_self * mean_i CE(head(xi'), i)
    """
    w = model.weights
    a_batch = np.atleast_2d(a_batch)
    labels = np.asarray(labels, dtype=np.int64)
    batch = a_batch.shape[0]
    gen_grads = Gradients.zeros_like(model.generator)
    head_grads = Gradients.zeros_like(model.mask_head)

    masked = _masked_variants(model, noise_seed)
    variants = [0] + masked
    selfsup_set: set[int] = set()
    if w.lambda_self > 0:
        selfsup_set = set(masked) | ({0} if model.self_sup_includes_complete else set())
    n_selfsup = len(selfsup_set)

    cls_targets = model.seen_classifier.class_index(labels) if w.beta_cls > 0 else None

    adv0 = cls0 = div_value = self_value = 0.0
    selfsup_hits = 0.0
    variant_adv: list[float] = []
    variant_cls: list[float] = []
    variant_self: list[float] = []

    for i in variants:
        a_i = a_batch if i == 0 else mask_group(a_batch, model.groups, i)
        z = derive_rng(noise_seed, "gen_z", i).standard_normal((batch, model.d_z))
        fake = model.generate(a_i, z)
        adjoint = np.zeros_like(fake)

        adv_i = cls_i = self_i = 0.0
        use_adv = i == 0 or w.lambda_div > 0
        w_adv = 1.0 if i == 0 else w.lambda_div / len(masked)
        if use_adv:
            out = model.critic.forward(np.concatenate([fake, a_i], axis=1))
            adv_i = -float(np.mean(out))
            _, dinput = model.critic.gradients(np.full((batch, 1), -w_adv / batch))
            adjoint += dinput[:, : model.d_x]
            if w.beta_cls > 0:
                logits = model.seen_classifier.net.forward(fake)
                ce, dlogits = softmax_cross_entropy(logits, cls_targets)
                cls_i = w.beta_cls * ce
                _, dinput = model.seen_classifier.net.gradients(
                    (w.beta_cls * w_adv) * dlogits)
                adjoint += dinput

        if i in selfsup_set:
            logits = model.mask_head.forward(fake)
            ce, dlogits = softmax_cross_entropy(logits, np.full(batch, i, dtype=np.int64))
            self_i = ce
            hg, dinput = model.mask_head.gradients((w.lambda_self / n_selfsup) * dlogits)
            head_grads.add_scaled(hg)
            if not model.detach_self_sup:
                adjoint += dinput
            self_value += ce / n_selfsup
            selfsup_hits += float(np.mean(np.argmax(logits, axis=1) == i))

        if i == 0:
            adv0, cls0 = adv_i, cls_i
        elif use_adv:
            div_value += w_adv * adv_i + (w.lambda_div / len(masked)) * cls_i

        g, _ = model.generator.gradients(adjoint)
        gen_grads.add_scaled(g)
        variant_adv.append(adv_i)
        variant_cls.append(cls_i)
        variant_self.append(self_i)

    g_self = w.lambda_self * self_value
    terms = {
        "gen_adv": adv0,
        "gen_cls": cls0,
        "gen_div": div_value,
        "gen_self": g_self,
        "gen_total": adv0 + cls0 + div_value + g_self,
        "self_sup_acc": selfsup_hits / n_selfsup if n_selfsup else 0.0,
        "_variant_adv": variant_adv,
        "_variant_cls": variant_cls,
        "_variant_self": variant_self,
    }
    return terms, gen_grads, head_grads


def self_supervision_loss(mask_head: Network,
                          generated: list[tuple[np.ndarray, int]]) -> float:
    """Mean cross-entropy of the mask head over (features, mask label) pairs."""
    if not generated:
        raise ArgumentError("empty generated set")
    n_labels = mask_head.n_outputs
    losses = []
    for features, label in generated:
        if not 0 <= label < n_labels:
            raise ArgumentError(f"mask label {label} outside 0..{n_labels - 1}")
        feats = np.atleast_2d(features)
        logits = mask_head.forward(feats)
        loss, _ = softmax_cross_entropy(logits, np.full(feats.shape[0], label,
                                                        dtype=np.int64))
        losses.append(loss)
    return float(np.mean(losses))


# ---------------------------------------------------------------------------
# Training loops


class TrainingLog:
    """Per-epoch (term, value) records, serialized as CSV."""

    def __init__(self):
        self.rows: list[tuple[int, str, float]] = []

    def append(self, epoch: int, term: str, value: float):
        self.rows.append((epoch, term, float(value)))

    def term_series(self, term: str) -> np.ndarray:
        return np.asarray([v for _, t, v in self.rows if t == term])

    def terms(self) -> list[str]:
        seen: list[str] = []
        for _, t, _ in self.rows:
            if t not in seen:
                seen.append(t)
        return seen

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("epoch,term,value\n")
            for epoch, term, value in self.rows:
                fh.write(f"{epoch},{term},{value!r}\n")
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> "TrainingLog":
        path = Path(path)
        if not path.exists():
            raise LoadError(f"missing file: {path}")
        log = cls()
        with open(path, encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                epoch, term, value = line.strip().split(",")
                log.append(int(epoch), term, float(value))
        return log

    def equals(self, other: "TrainingLog") -> bool:
        return self.rows == other.rows


_LOGGED_TERMS = ("critic_fake", "critic_real", "critic_wass", "critic_gp",
                 "critic_div", "critic_total", "gen_adv", "gen_cls", "gen_div",
                 "gen_self", "gen_total", "self_sup_acc")


def _draw_batch(n: int, batch_size: int, seed: int, *labels) -> np.ndarray:
    size = min(batch_size, n)
    return derive_rng(seed, "batch", *labels).choice(n, size=size, replace=False)


def _check_finite(terms: dict, checkpoint) -> None:
    for key, value in terms.items():
        if key.startswith("_"):
            continue
        if not math.isfinite(value):
            raise TrainingError("non-finite loss", term=key, checkpoint=checkpoint)


def train(model: DiverseFeatureGan, bundle: DatasetBundle,
          settings: TrainSettings) -> TrainingLog:
    """Alternate critic and generator updates over train_seen minibatches."""
    train_idx = bundle.indices("train_seen")
    if train_idx.size == 0:
        raise ValidationError("train_seen split is empty")
    if not np.array_equal(model.seen_classifier.class_ids, bundle.seen_classes):
        raise ValidationError("seen classifier does not cover the seen classes")
    model._sampled_mask_mode = settings.sampled_mask_mode

    features = bundle.features[train_idx]
    labels = bundle.labels[train_idx]
    n = features.shape[0]
    steps_per_epoch = (n + settings.batch_size - 1) // settings.batch_size

    opt_c = init_adam(model.critic.parameters(), settings.lr_critic)
    opt_g = init_adam(model.generator.parameters(), settings.lr_generator,
                      weight_decay=settings.weight_decay_generator)
    opt_h = init_adam(model.mask_head.parameters(), settings.lr_generator)

    log = TrainingLog()
    last_checkpoint = None
    ckpt_dir = Path(settings.checkpoint_dir) if settings.checkpoint_dir else None

    for epoch in range(settings.epochs):
        sums = dict.fromkeys(_LOGGED_TERMS, 0.0)
        for step in range(steps_per_epoch):
            for j in range(model.weights.critic_steps):
                batch = _draw_batch(n, settings.batch_size, settings.seed,
                                    epoch, step, "critic", j)
                noise_seed = stream_key(settings.seed, "critic_noise", epoch, step, j)
                terms, grads = critic_loss(model, features[batch],
                                           bundle.attributes[labels[batch]],
                                           noise_seed)
                _check_finite(terms, last_checkpoint)
                optimizer_step(model.critic.parameters(), grads.as_list(), opt_c)
            for key in ("critic_fake", "critic_real", "critic_wass", "critic_gp",
                        "critic_div", "critic_total"):
                sums[key] += terms[key]

            batch = _draw_batch(n, settings.batch_size, settings.seed,
                                epoch, step, "gen")
            noise_seed = stream_key(settings.seed, "gen_noise", epoch, step)
            terms, gen_grads, head_grads = generator_loss(
                model, bundle.attributes[labels[batch]], labels[batch], noise_seed)
            _check_finite(terms, last_checkpoint)
            optimizer_step(model.generator.parameters(), gen_grads.as_list(), opt_g)
            if model.weights.lambda_self > 0:
                optimizer_step(model.mask_head.parameters(), head_grads.as_list(), opt_h)
            for key in ("gen_adv", "gen_cls", "gen_div", "gen_self", "gen_total",
                        "self_sup_acc"):
                sums[key] += terms[key]

        for key in _LOGGED_TERMS:
            log.append(epoch, key, sums[key] / steps_per_epoch)

        if (ckpt_dir is not None and settings.checkpoint_every > 0
                and (epoch + 1) % settings.checkpoint_every == 0):
            last_checkpoint = save_model(model, ckpt_dir / f"epoch_{epoch + 1:05d}")

    model.trained = True
    if ckpt_dir is not None:
        last_checkpoint = save_model(model, ckpt_dir / "final")
    return log


def plain_train(generator: Network, critic: Network, bundle: DatasetBundle,
                lambda_gp: float, critic_steps: int,
                settings: TrainSettings) -> TrainingLog:
    """Reference conditional WGAN-GP loop (no masked variants, no guidance).

    Kept deliberately independent of the augmented loss functions; the
    augmented path with every added weight at zero must match it bitwise.
    """
    train_idx = bundle.indices("train_seen")
    if train_idx.size == 0:
        raise ValidationError("train_seen split is empty")
    features = bundle.features[train_idx]
    labels = bundle.labels[train_idx]
    n = features.shape[0]
    d_z = generator.n_inputs - bundle.d_a
    d_x = generator.n_outputs
    steps_per_epoch = (n + settings.batch_size - 1) // settings.batch_size

    opt_c = init_adam(critic.parameters(), settings.lr_critic)
    opt_g = init_adam(generator.parameters(), settings.lr_generator,
                      weight_decay=settings.weight_decay_generator)

    log = TrainingLog()
    for epoch in range(settings.epochs):
        sums = dict.fromkeys(_LOGGED_TERMS, 0.0)
        for step in range(steps_per_epoch):
            for j in range(critic_steps):
                batch = _draw_batch(n, settings.batch_size, settings.seed,
                                    epoch, step, "critic", j)
                noise_seed = stream_key(settings.seed, "critic_noise", epoch, step, j)
                x = features[batch]
                a = bundle.attributes[labels[batch]]
                b = x.shape[0]
                grads = Gradients.zeros_like(critic)

                z = derive_rng(noise_seed, "critic_z", 0).standard_normal((b, d_z))
                fake = generator.forward(np.concatenate([a, z], axis=1))
                out = critic.forward(np.concatenate([fake, a], axis=1))
                fake_mean = float(np.mean(out))
                g, _ = critic.gradients(np.full((b, 1), 1.0 / b))
                grads.add_scaled(g)

                alpha = derive_rng(noise_seed, "critic_alpha", 0).uniform(size=(b, 1))
                inter = alpha * x + (1.0 - alpha) * fake
                gp, gp_grads = penalty_gradients(critic, inter, a, lambda_gp)
                grads.add_scaled(gp_grads, 1.0)

                real_out = critic.forward(np.concatenate([x, a], axis=1))
                real_mean = float(np.mean(real_out))
                g, _ = critic.gradients(np.full((b, 1), -1.0 / b))
                grads.add_scaled(g)

                optimizer_step(critic.parameters(), grads.as_list(), opt_c)
            wass = fake_mean - real_mean
            for key, value in (("critic_fake", fake_mean), ("critic_real", real_mean),
                               ("critic_wass", wass), ("critic_gp", gp),
                               ("critic_total", wass + gp + 0.0)):
                sums[key] += value

            batch = _draw_batch(n, settings.batch_size, settings.seed,
                                epoch, step, "gen")
            noise_seed = stream_key(settings.seed, "gen_noise", epoch, step)
            a = bundle.attributes[labels[batch]]
            b = a.shape[0]
            z = derive_rng(noise_seed, "gen_z", 0).standard_normal((b, d_z))
            fake = generator.forward(np.concatenate([a, z], axis=1))
            adjoint = np.zeros_like(fake)
            out = critic.forward(np.concatenate([fake, a], axis=1))
            adv = -float(np.mean(out))
            _, dinput = critic.gradients(np.full((b, 1), -1.0 / b))
            adjoint += dinput[:, :d_x]
            g, _ = generator.gradients(adjoint)
            gen_grads = Gradients.zeros_like(generator)
            gen_grads.add_scaled(g)
            optimizer_step(generator.parameters(), gen_grads.as_list(), opt_g)
            sums["gen_adv"] += adv
            sums["gen_total"] += adv + 0.0 + 0.0 + 0.0

        for key in _LOGGED_TERMS:
            log.append(epoch, key, sums[key] / steps_per_epoch)
    return log


def mask_head_accuracy(model: DiverseFeatureGan, attributes: np.ndarray,
                       n_per_variant: int, seed: int) -> float:
    """Accuracy of the mask head on freshly generated held-out variants."""
    attributes = np.atleast_2d(attributes)
    labels = (list(range(model.groups.m + 1)) if model.self_sup_includes_complete
              else list(range(1, model.groups.m + 1)))
    correct = 0
    total = 0
    for c, a in enumerate(attributes):
        for i in labels:
            a_i = mask_group(a, model.groups, i)
            z = derive_rng(seed, "head_eval", c, i).standard_normal(
                (n_per_variant, model.d_z))
            fake = model.generate(np.tile(a_i, (n_per_variant, 1)), z)
            pred = np.argmax(model.mask_head.forward(fake), axis=1)
            correct += int(np.sum(pred == i))
            total += n_per_variant
    return correct / total


# ---------------------------------------------------------------------------
# Model checkpoints


def save_model(model: DiverseFeatureGan, dir_path: str | Path) -> Path:
    networks = {
        "generator": model.generator,
        "critic": model.critic,
        "mask_head": model.mask_head,
        "seen_classifier": model.seen_classifier.net,
    }
    arrays = {
        "groups_assignment": model.groups.assignment,
        "groups_centroids": model.groups.centroids,
        "seen_class_ids": model.seen_classifier.class_ids,
    }
    extra = {
        "weights": {
            "lambda_gp": model.weights.lambda_gp,
            "lambda_div": model.weights.lambda_div,
            "lambda_self": model.weights.lambda_self,
            "beta_cls": model.weights.beta_cls,
            "critic_steps": model.weights.critic_steps,
        },
        "d_z": model.d_z,
        "m": model.groups.m,
        "groups_objective": model.groups.objective,
        "self_sup_includes_complete": model.self_sup_includes_complete,
        "detach_self_sup": model.detach_self_sup,
        "trained": model.trained,
    }
    return save_checkpoint(dir_path, networks, arrays, extra)


def load_model(dir_path: str | Path) -> DiverseFeatureGan:
    networks, arrays, extra = load_checkpoint(dir_path)
    groups = AttributeGroups(
        assignment=arrays["groups_assignment"],
        centroids=arrays["groups_centroids"],
        objective=float(extra["groups_objective"]),
        m=int(extra["m"]),
    )
    seen = SoftmaxClassifier(networks["seen_classifier"], arrays["seen_class_ids"])
    model = DiverseFeatureGan(
        networks["generator"], networks["critic"], networks["mask_head"], seen,
        groups, LossWeights(**extra["weights"]), int(extra["d_z"]),
        self_sup_includes_complete=bool(extra["self_sup_includes_complete"]),
        detach_self_sup=bool(extra["detach_self_sup"]),
    )
    model.trained = bool(extra["trained"])
    return model
