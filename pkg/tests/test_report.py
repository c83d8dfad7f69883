import xml.etree.ElementTree as ET

import numpy as np
import pytest

from divsynth.config import ExperimentConfig
from divsynth.errors import ArgumentError, LoadError
from divsynth.gan import TrainingLog
from divsynth.pipeline import run_experiment
from divsynth.report import (
    generate_report,
    loss_curves_svg,
    pca_components,
    project,
    projection_scatter_svg,
    write_projection_csv,
)

SVG_NS = "{http://www.w3.org/2000/svg}"


def count_marker_uses(path, gid):
    """Marker elements under a gid group: <use> refs or one <path> per point."""
    root = ET.parse(path).getroot()
    for g in root.iter(f"{SVG_NS}g"):
        if g.get("id") == gid:
            uses = len(g.findall(f".//{SVG_NS}use"))
            if uses:
                return uses
            defs_paths = len(g.findall(f".//{SVG_NS}defs/{SVG_NS}path"))
            return len(g.findall(f".//{SVG_NS}path")) - defs_paths
    return 0


@pytest.fixture(scope="module")
def tiny_run(tiny_benchmark, tmp_path_factory):
    config = ExperimentConfig(dataset=str(tiny_benchmark["manifest"]), m=2,
                              epochs=4, batch_size=32, hidden_dim=16,
                              pretrain_epochs=20, final_epochs=20,
                              n_complete_per_class=10, ratio=0.5,
                              critic_steps=2, master_seed=3)
    run_dir = tmp_path_factory.mktemp("run")
    result = run_experiment(config, run_dir)
    return run_dir, result, tiny_benchmark["bundle"]


class TestPca:
    def test_axis_aligned_identity(self, rng):
        # Exactly diagonal sample covariance via Gram-Schmidt on the columns.
        c0 = 3.0 * rng.normal(size=40)
        c0 -= c0.mean()
        c1 = 0.5 * rng.normal(size=40)
        c1 -= c1.mean()
        c1 -= (c1 @ c0) / (c0 @ c0) * c0
        x = np.column_stack([c0, c1])
        components, mean, eigvals = pca_components(x, 2)
        proj = project(x, components, mean)
        centered = x - x.mean(axis=0)
        # Components are +-e1/+-e2; the sign fix makes them +e1/+e2.
        assert np.allclose(np.abs(components), np.eye(2), atol=1e-9)
        assert np.allclose(proj, centered, atol=1e-9)
        assert eigvals[0] >= eigvals[1]

    def test_components_orthonormal(self, rng):
        x = rng.normal(size=(30, 6))
        components, _, _ = pca_components(x, 2)
        gram = components @ components.T
        assert np.abs(gram - np.eye(2)).max() <= 1e-9

    def test_sign_convention(self, rng):
        x = rng.normal(size=(25, 4))
        components, _, _ = pca_components(x, 3)
        for row in components:
            assert row[np.argmax(np.abs(row))] > 0

    def test_needs_two_rows(self):
        with pytest.raises(ArgumentError):
            pca_components(np.ones((1, 3)))


class TestFigures:
    def test_scatter_point_elements(self, tmp_path, rng):
        real = rng.normal(size=(9, 2))
        synth = rng.normal(size=(5, 2))
        path = projection_scatter_svg(tmp_path / "sc.svg", real,
                                      np.zeros(9, dtype=int), synth,
                                      np.ones(5, dtype=int))
        assert count_marker_uses(path, "points-real") == 9
        assert count_marker_uses(path, "points-synth") == 5

    def test_scatter_deterministic_bytes(self, tmp_path, rng):
        real = rng.normal(size=(6, 2))
        labels = np.zeros(6, dtype=int)
        a = projection_scatter_svg(tmp_path / "a.svg", real, labels, real, labels)
        b = projection_scatter_svg(tmp_path / "b.svg", real, labels, real, labels)
        assert a.read_bytes() == b.read_bytes()

    def test_loss_curves(self, tmp_path):
        log = TrainingLog()
        for epoch in range(5):
            log.append(epoch, "gen_adv", 1.0 / (epoch + 1))
            log.append(epoch, "critic_wass", -0.1 * epoch)
        path = loss_curves_svg(tmp_path / "loss.svg", log)
        assert path.exists() and path.stat().st_size > 0

    def test_projection_csv_rows(self, tmp_path, rng):
        points = rng.normal(size=(7, 2))
        path = write_projection_csv(tmp_path / "p.csv", points,
                                    np.arange(7), ["real"] * 7)
        assert len(path.read_text().splitlines()) == 8


class TestGenerateReport:
    def test_report_bundle(self, tiny_run):
        run_dir, result, bundle = tiny_run
        files = generate_report(run_dir)
        names = {f.name for f in files}
        assert names == {"summary.json", "summary.csv", "projection.csv",
                         "scatter.svg", "loss_curves.svg"}
        n_real = bundle.indices("test_unseen").size
        n_synth = bundle.unseen_classes.size * (10 + 2 * 5)
        scatter = run_dir / "report" / "scatter.svg"
        assert count_marker_uses(scatter, "points-real") == n_real
        assert count_marker_uses(scatter, "points-synth") == n_synth
        projection_rows = (run_dir / "report" / "projection.csv").read_text().splitlines()
        assert len(projection_rows) == 1 + n_real + n_synth

    def test_missing_artifacts_named(self, tmp_path):
        with pytest.raises(LoadError, match="run_manifest.json"):
            generate_report(tmp_path)
