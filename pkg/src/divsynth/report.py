"""Run reports: deterministic PCA projection, scatter and loss-curve figures.

Figures are rendered with matplotlib to SVG. The svg hash salt is pinned
and the Date metadata dropped so identical inputs produce identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "divsynth"

import matplotlib.pyplot as plt
import numpy as np

from .data import load_dataset
from .errors import ArgumentError, LoadError
from .gan import TrainingLog
from .synthesis import load_synthesized

_SAVE_KW = {"metadata": {"Date": None}}


def pca_components(x: np.ndarray, n_components: int = 2
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top principal components via covariance eigendecomposition.

    Components are returned as rows, ordered by descending eigenvalue, each
    sign-fixed so its largest-magnitude coordinate is positive. Returns
    (components, mean, eigenvalues).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n, d = x.shape
    if n < 2:
        raise ArgumentError(f"need at least 2 rows for a projection, got {n}")
    if n_components > d:
        raise ArgumentError(f"{n_components} components for {d} dimensions")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:n_components]
    components = eigvecs[:, order].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return components, mean, eigvals[order].copy()


def project(x: np.ndarray, components: np.ndarray, mean: np.ndarray) -> np.ndarray:
    return (np.atleast_2d(x) - mean) @ components.T


def write_projection_csv(path: str | Path, points: np.ndarray, labels: np.ndarray,
                         kinds: list[str]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pc1", "pc2", "class", "kind"])
        for (p1, p2), lab, kind in zip(points, labels, kinds):
            writer.writerow([repr(float(p1)), repr(float(p2)), str(int(lab)), kind])
    return path


def projection_scatter_svg(path: str | Path, real_points: np.ndarray,
                           real_labels: np.ndarray, synth_points: np.ndarray,
                           synth_labels: np.ndarray) -> Path:
    """Scatter of projected features: circles = real, crosses = synthesized.

    Points are grouped under SVG ids ``points-real`` / ``points-synth`` with
    one marker element per point.
    """
    path = Path(path)
    classes = sorted(set(np.asarray(real_labels).tolist())
                     | set(np.asarray(synth_labels).tolist()))
    cmap = plt.get_cmap("tab20")
    color_of = {c: cmap(k % 20) for k, c in enumerate(classes)}
    fig, ax = plt.subplots(figsize=(6.4, 5.2))
    if len(real_points):
        ax.scatter(real_points[:, 0], real_points[:, 1], s=22,
                   c=[color_of[int(c)] for c in real_labels],
                   marker="o", edgecolors="none", alpha=0.75, gid="points-real",
                   label="real")
    if len(synth_points):
        ax.scatter(synth_points[:, 0], synth_points[:, 1], s=26,
                   c=[color_of[int(c)] for c in synth_labels],
                   marker="x", linewidths=1.2, gid="points-synth",
                   label="synthesized")
    ax.set_xlabel("pc1")
    ax.set_ylabel("pc2")
    ax.set_title("real vs synthesized unseen-class features")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def loss_curves_svg(path: str | Path, log: TrainingLog,
                    terms: tuple[str, ...] = ("critic_wass", "critic_gp",
                                              "critic_div", "gen_adv", "gen_cls",
                                              "gen_div", "gen_self")) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for term in terms:
        series = log.term_series(term)
        if series.size:
            ax.plot(np.arange(series.size), series, label=term, linewidth=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss term")
    ax.set_title("training loss terms")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def generate_report(run_dir: str | Path) -> list[Path]:
    """Build the report bundle for a finished run directory."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "run_manifest.json"
    if not manifest_path.exists():
        raise LoadError(f"missing file: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    metrics_path = run_dir / "metrics.json"
    if not metrics_path.exists():
        raise LoadError(f"missing file: {metrics_path}")
    metrics = json.loads(metrics_path.read_text(encoding="utf-8"))

    report_dir = run_dir / "report"
    report_dir.mkdir(exist_ok=True)
    written: list[Path] = []

    summary_json = report_dir / "summary.json"
    summary_json.write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n",
                            encoding="utf-8")
    written.append(summary_json)
    summary_csv = report_dir / "summary.csv"
    with open(summary_csv, "w", newline="", encoding="utf-8") as fh:
        fh.write("metric,value\n")
        for key in ("U", "S", "H"):
            fh.write(f"{key},{metrics[key]!r}\n")
        for cls, acc in sorted(metrics.get("per_class", {}).items(),
                               key=lambda kv: int(kv[0])):
            fh.write(f"class_{cls},{acc!r}\n")
    written.append(summary_csv)

    bundle = load_dataset(manifest["config"]["dataset"])
    synth = load_synthesized(run_dir / "synthesized.csv")
    unseen_idx = bundle.indices("test_unseen")
    real_x = bundle.features[unseen_idx]
    real_labels = bundle.labels[unseen_idx]
    unseen_mask = np.isin(synth.labels, bundle.unseen_classes)
    synth_x = synth.features[unseen_mask]
    synth_labels = synth.labels[unseen_mask]

    stacked = np.concatenate([real_x, synth_x], axis=0)
    components, mean, _ = pca_components(stacked, 2)
    real_proj = project(real_x, components, mean)
    synth_proj = project(synth_x, components, mean)

    written.append(write_projection_csv(
        report_dir / "projection.csv",
        np.concatenate([real_proj, synth_proj], axis=0),
        np.concatenate([real_labels, synth_labels]),
        ["real"] * real_proj.shape[0] + ["synthesized"] * synth_proj.shape[0]))
    written.append(projection_scatter_svg(
        report_dir / "scatter.svg", real_proj, real_labels, synth_proj, synth_labels))

    log = TrainingLog.from_csv(run_dir / "training_log.csv")
    written.append(loss_curves_svg(report_dir / "loss_curves.svg", log))
    return written
