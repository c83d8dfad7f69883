"""Experiment configuration: one flat JSON document, flag overrides on top."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .errors import LoadError, ValidationError


@dataclass
class ExperimentConfig:
    dataset: str = ""
    m: int = 4
    lambda_gp: float = 10.0
    lambda_div: float = 1.0
    lambda_self: float = 1.0
    beta_cls: float = 0.01
    critic_steps: int = 5
    epochs: int = 150
    batch_size: int = 64
    lr_generator: float = 1e-3
    lr_critic: float = 1e-3
    lr_classifier: float = 1e-2
    pretrain_epochs: int = 100
    final_epochs: int = 100
    d_z: int | None = None
    hidden_dim: int = 256
    n_complete_per_class: int = 100
    ratio: float = 0.25
    master_seed: int = 0
    output_dir: str = "runs"
    weight_decay_generator: float = 1e-4
    checkpoint_every: int = 0
    cluster_max_iters: int = 200
    self_sup_includes_complete: bool = True
    detach_self_sup: bool = False
    drop_noop_masks: bool = False
    use_synthetic_seen: bool = False
    sampled_mask_mode: bool = False

    def validate(self) -> "ExperimentConfig":
        if not self.dataset:
            raise ValidationError("config needs a dataset manifest path")
        if self.m < 2:
            raise ValidationError("m must be >= 2")
        if self.epochs < 1 or self.pretrain_epochs < 1 or self.final_epochs < 1:
            raise ValidationError("epoch counts must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.ratio < 0 or self.ratio >= 10:
            raise ValidationError(f"ratio={self.ratio} outside [0, 10)")
        return self

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        changes = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        return path


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"missing file: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise LoadError(f"malformed config {path}: {exc}") from exc
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValidationError(f"unknown config keys: {unknown}")
    return ExperimentConfig(**raw)
