"""Command-line entry point.

Subcommands: make-synthetic, cluster, run, ablate, sweep, report.
Exit codes: 0 success, 1 validation/argument error, 2 io error,
3 numeric failure during training.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .data import (
    SyntheticSpec,
    generate_synthetic_benchmark,
    load_dataset,
    load_embeddings,
    save_dataset,
    save_embeddings,
    save_ground_truth_groups,
)
from .errors import (
    ArgumentError,
    DivsynthError,
    LoadError,
    ShapeError,
    StateError,
    TrainingError,
    ValidationError,
    WriteError,
)
from .grouping import cluster_attribute_dimensions, profile_embeddings, save_groups
from .pipeline import run_ablation, run_experiment, run_sweep
from .report import generate_report
from .rng import stream_key


def _output_root(out_flag: str | None, config: ExperimentConfig | None) -> Path:
    if out_flag:
        return Path(out_flag)
    env = os.environ.get("SDFA_OUT")
    if env:
        return Path(env)
    return Path(config.output_dir if config else "runs")


def _load_config(args) -> ExperimentConfig:
    config = load_config(args.config)
    return config.with_overrides(master_seed=args.seed)


def cmd_make_synthetic(args) -> int:
    spec = SyntheticSpec(d_a=args.d_a, d_x=args.d_x, m_true=args.m_true,
                         n_seen_classes=args.seen_classes,
                         n_unseen_classes=args.unseen_classes,
                         instances_per_class=args.per_class,
                         p_miss=args.p_miss, noise_sigma=args.noise_sigma,
                         seed=args.seed if args.seed is not None else 0)
    bundle, table, groups = generate_synthetic_benchmark(spec)
    out_dir = Path(args.out) if args.out else _output_root(None, None) / "synthetic"
    manifest = save_dataset(bundle, out_dir)
    save_embeddings(table, manifest)
    save_ground_truth_groups(groups, table.names, manifest)
    print(manifest)
    return 0


def cmd_cluster(args) -> int:
    config = _load_config(args)
    config.validate()
    bundle = load_dataset(config.dataset)
    table = load_embeddings(config.dataset)
    if table is None:
        table = profile_embeddings(bundle)
    groups = cluster_attribute_dimensions(table, config.m,
                                          stream_key(config.master_seed, "cluster"),
                                          max_iters=config.cluster_max_iters)
    out_dir = (Path(args.out) if args.out
               else _output_root(None, config) / f"cluster_seed{config.master_seed}")
    path = save_groups(groups, table.names, out_dir)
    print(path)
    return 0


def cmd_run(args) -> int:
    config = _load_config(args)
    run_dir = (Path(args.out) if args.out
               else _output_root(None, config) / f"run_seed{config.master_seed}")
    result = run_experiment(config, run_dir)
    m = result.metrics
    print(f"U={m.u:.4f} S={m.s:.4f} H={m.h:.4f}")
    print(run_dir / "metrics.json")
    return 0


def cmd_ablate(args) -> int:
    config = _load_config(args)
    config.validate()
    out_dir = (Path(args.out) if args.out
               else _output_root(None, config) / f"ablation_seed{config.master_seed}")
    path = run_ablation(config, args.seeds, out_dir)
    print(path)
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args)
    config.validate()
    values = [v for v in args.values.split(",") if v]
    out_dir = (Path(args.out) if args.out
               else _output_root(None, config) / f"sweep_{args.param}_seed{config.master_seed}")
    path = run_sweep(config, args.param, values, args.seeds, out_dir)
    print(path)
    return 0


def cmd_report(args) -> int:
    for path in generate_report(args.run_dir):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="divsynth",
        description="Diverse feature synthesis for generalized zero-shot learning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synthetic", help="generate the synthetic benchmark")
    p.add_argument("--out", help="dataset directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--d-a", dest="d_a", type=int, default=20)
    p.add_argument("--d-x", dest="d_x", type=int, default=24)
    p.add_argument("--m-true", dest="m_true", type=int, default=4)
    p.add_argument("--seen-classes", dest="seen_classes", type=int, default=10)
    p.add_argument("--unseen-classes", dest="unseen_classes", type=int, default=4)
    p.add_argument("--per-class", dest="per_class", type=int, default=20)
    p.add_argument("--p-miss", dest="p_miss", type=float, default=0.5)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=0.02)
    p.set_defaults(handler=cmd_make_synthetic)

    for name, handler, extra in (
        ("cluster", cmd_cluster, ()),
        ("run", cmd_run, ()),
        ("ablate", cmd_ablate, ("seeds",)),
        ("sweep", cmd_sweep, ("seeds", "param", "values")),
    ):
        p = sub.add_parser(name, help=f"{name} command")
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--out", help="output directory")
        if "seeds" in extra:
            p.add_argument("--seeds", type=int, default=5,
                           help="number of paired seeds")
        if "param" in extra:
            p.add_argument("--param", required=True, choices=("m", "ratio"))
            p.add_argument("--values", required=True,
                           help="comma-separated parameter values")
        p.set_defaults(handler=handler)

    p = sub.add_parser("report", help="render report bundle for a run directory")
    p.add_argument("run_dir")
    p.set_defaults(handler=cmd_report)
    return parser


_ERROR_KINDS = (
    (LoadError, "load error"),
    (WriteError, "io error"),
    (TrainingError, "training error"),
    (ArgumentError, "argument error"),
    (ShapeError, "shape error"),
    (StateError, "state error"),
    (ValidationError, "validation error"),
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except DivsynthError as exc:
        kind = next((name for cls, name in _ERROR_KINDS if isinstance(exc, cls)),
                    "error")
        print(f"{kind}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
