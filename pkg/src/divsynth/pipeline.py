"""End-to-end experiment orchestration: run, ablation legs, sweeps.

A run directory holds everything needed to reproduce and report: the
resolved config, derived stage seeds, groups, the training log, model
checkpoints, the synthesized set, metrics, and a manifest with artifact
hashes.
"""

from __future__ import annotations

import csv
import hashlib
import json
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .augmentation import build_augmented_set, export_augmented_csv
from .classifier import SoftmaxClassifier, pretrain_seen_classifier
from .config import ExperimentConfig
from .data import load_dataset, load_embeddings
from .errors import DivsynthError
from .gan import (
    DiverseFeatureGan,
    LossWeights,
    TrainSettings,
    build_model,
    train,
)
from .grouping import cluster_attribute_dimensions, profile_embeddings, save_groups
from .metrics import GzslMetrics, evaluate_gzsl
from .rng import stream_key
from .synthesis import SynthesisPlan, save_synthesized, synthesize_features, train_final_classifier


@dataclass
class RunResult:
    metrics: GzslMetrics
    run_dir: Path
    model: DiverseFeatureGan
    final_classifier: SoftmaxClassifier


@contextmanager
def _stage(name: str):
    try:
        yield
    except DivsynthError as exc:
        exc.args = (f"stage {name}: {exc}",)
        raise


def _derived_seeds(master_seed: int) -> dict[str, int]:
    return {name: stream_key(master_seed, name)
            for name in ("cluster", "pretrain", "model", "train",
                         "synthesize", "synthesize_seen", "final")}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(config: ExperimentConfig, run_dir: str | Path) -> RunResult:
    """Cluster -> pretrain -> train -> synthesize -> final classifier -> evaluate."""
    config.validate()
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    config.write_json(run_dir / "config.resolved.json")
    seeds = _derived_seeds(config.master_seed)

    with _stage("load"):
        bundle = load_dataset(config.dataset)
        table = load_embeddings(config.dataset)
        if table is None:
            table = profile_embeddings(bundle)

    with _stage("cluster"):
        groups = cluster_attribute_dimensions(table, config.m, seeds["cluster"],
                                              max_iters=config.cluster_max_iters)
        save_groups(groups, table.names, run_dir)
        export_augmented_csv(
            build_augmented_set(bundle.attributes, groups,
                                include_complete=config.self_sup_includes_complete,
                                drop_noop_masks=config.drop_noop_masks),
            run_dir / "augmented_attributes.csv")

    with _stage("pretrain"):
        seen_classifier = pretrain_seen_classifier(
            bundle, epochs=config.pretrain_epochs,
            learning_rate=config.lr_classifier, seed=seeds["pretrain"],
            batch_size=config.batch_size)

    with _stage("train"):
        weights = LossWeights(lambda_gp=config.lambda_gp,
                              lambda_div=config.lambda_div,
                              lambda_self=config.lambda_self,
                              beta_cls=config.beta_cls,
                              critic_steps=config.critic_steps)
        model = build_model(bundle.d_x, groups, seen_classifier, weights,
                            seed=seeds["model"], hidden_dim=config.hidden_dim,
                            d_z=config.d_z,
                            self_sup_includes_complete=config.self_sup_includes_complete,
                            detach_self_sup=config.detach_self_sup)
        settings = TrainSettings(epochs=config.epochs,
                                 batch_size=config.batch_size,
                                 lr_generator=config.lr_generator,
                                 lr_critic=config.lr_critic,
                                 seed=seeds["train"],
                                 weight_decay_generator=config.weight_decay_generator,
                                 checkpoint_every=config.checkpoint_every,
                                 checkpoint_dir=run_dir / "checkpoints",
                                 sampled_mask_mode=config.sampled_mask_mode)
        log = train(model, bundle, settings)
        log.to_csv(run_dir / "training_log.csv")

    with _stage("synthesize"):
        plan = SynthesisPlan(n_complete_per_class=config.n_complete_per_class,
                             ratio_per_group=config.ratio,
                             target_classes=bundle.unseen_classes,
                             seed=seeds["synthesize"])
        synth = synthesize_features(model, bundle.attributes, plan)
        if config.use_synthetic_seen:
            seen_plan = SynthesisPlan(n_complete_per_class=config.n_complete_per_class,
                                      ratio_per_group=config.ratio,
                                      target_classes=bundle.seen_classes,
                                      seed=seeds["synthesize_seen"])
            seen_synth = synthesize_features(model, bundle.attributes, seen_plan)
            synth.features = np.concatenate([synth.features, seen_synth.features])
            synth.labels = np.concatenate([synth.labels, seen_synth.labels])
            synth.provenance = np.concatenate([synth.provenance, seen_synth.provenance])
        save_synthesized(synth, run_dir / "synthesized.csv")

    with _stage("final_classifier"):
        final = train_final_classifier(bundle, synth, epochs=config.final_epochs,
                                       learning_rate=config.lr_classifier,
                                       seed=seeds["final"],
                                       batch_size=config.batch_size)

    with _stage("evaluate"):
        metrics = evaluate_gzsl(final, bundle)
        metrics.write_json(run_dir / "metrics.json")
        metrics.write_csv(run_dir / "metrics.csv")

    artifacts = ["config.resolved.json", "groups.csv", "groups.json",
                 "augmented_attributes.csv", "training_log.csv",
                 "synthesized.csv", "metrics.json", "metrics.csv"]
    manifest = {
        "version": __version__,
        "config": config.to_dict(),
        "derived_seeds": {k: str(v) for k, v in seeds.items()},
        "artifact_hashes": {name: _sha256(run_dir / name) for name in artifacts},
        "pretrain_accuracy": seen_classifier.train_accuracy,
        "final_train_accuracy": final.train_accuracy,
    }
    (run_dir / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return RunResult(metrics=metrics, run_dir=run_dir, model=model,
                     final_classifier=final)


ABLATION_LEGS = (
    ("baseline", {"lambda_div": 0.0, "lambda_self": 0.0, "ratio": 0.0}),
    ("div", {"lambda_self": 0.0}),
    ("div_self", {}),
)


def run_ablation(config: ExperimentConfig, n_seeds: int,
                 out_dir: str | Path) -> Path:
    """Three legs at shared seeds; CSV of U/S/H per leg per seed plus means.

    The baseline leg is single-attribute end to end: no diversity or mask
    losses in training and no masked rows at synthesis time.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [config.master_seed + k for k in range(n_seeds)]
    results: dict[tuple[str, int], GzslMetrics] = {}
    for leg, overrides in ABLATION_LEGS:
        for seed in seeds:
            leg_config = config.with_overrides(master_seed=seed, **overrides)
            result = run_experiment(leg_config, out_dir / f"{leg}_seed{seed}")
            results[(leg, seed)] = result.metrics

    path = out_dir / "ablation.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["leg", "seed", "U", "S", "H"])
        for leg, _ in ABLATION_LEGS:
            for seed in seeds:
                m = results[(leg, seed)]
                writer.writerow([leg, str(seed), repr(m.u), repr(m.s), repr(m.h)])
        for leg, _ in ABLATION_LEGS:
            ms = [results[(leg, seed)] for seed in seeds]
            writer.writerow([leg, "mean",
                             repr(float(np.mean([m.u for m in ms]))),
                             repr(float(np.mean([m.s for m in ms]))),
                             repr(float(np.mean([m.h for m in ms])))])
    return path


SWEEPABLE = {"m": "m", "ratio": "ratio"}


def run_sweep(config: ExperimentConfig, parameter: str, values: list,
              n_seeds: int, out_dir: str | Path) -> Path:
    """One run per (value, seed); CSV of (value, seed, U, S, H) in that order."""
    if parameter not in SWEEPABLE:
        raise DivsynthError(f"unknown sweep parameter {parameter!r}; "
                            f"choose from {sorted(SWEEPABLE)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [config.master_seed + k for k in range(n_seeds)]
    field = SWEEPABLE[parameter]
    caster = int if parameter == "m" else float

    path = out_dir / "sweep.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["parameter", "value", "seed", "U", "S", "H"])
        for value in values:
            value = caster(value)
            for seed in seeds:
                cfg = config.with_overrides(master_seed=seed, **{field: value})
                result = run_experiment(cfg, out_dir / f"{parameter}{value}_seed{seed}")
                m = result.metrics
                writer.writerow([parameter, str(value), str(seed),
                                 repr(m.u), repr(m.s), repr(m.h)])
    return path
