import numpy as np
import pytest

from divsynth.data import (
    SyntheticSpec,
    generate_synthetic_benchmark,
    save_dataset,
    save_embeddings,
    save_ground_truth_groups,
)

# Desk-scale benchmark used by the training-level tests and the acceptance
# experiments: masked instances on both sides of the seen/unseen split.
BENCH_SPEC = SyntheticSpec(d_a=16, d_x=24, m_true=4, n_seen_classes=8,
                           n_unseen_classes=4, instances_per_class=50,
                           p_miss=0.5, noise_sigma=0.02, seed=11)

# Smaller twin for CLI and io round-trip tests.
TINY_SPEC = SyntheticSpec(d_a=8, d_x=10, m_true=2, n_seen_classes=4,
                          n_unseen_classes=2, instances_per_class=12,
                          p_miss=0.5, noise_sigma=0.02, seed=3)


def _write_benchmark(root, spec):
    bundle, table, groups = generate_synthetic_benchmark(spec)
    manifest = save_dataset(bundle, root)
    save_embeddings(table, manifest)
    save_ground_truth_groups(groups, table.names, manifest)
    return bundle, table, groups, manifest


@pytest.fixture(scope="session")
def benchmark(tmp_path_factory):
    root = tmp_path_factory.mktemp("benchmark")
    bundle, table, groups, manifest = _write_benchmark(root, BENCH_SPEC)
    return {"bundle": bundle, "table": table, "ground_truth": groups,
            "manifest": manifest, "spec": BENCH_SPEC}


@pytest.fixture(scope="session")
def tiny_benchmark(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_benchmark")
    bundle, table, groups, manifest = _write_benchmark(root, TINY_SPEC)
    return {"bundle": bundle, "table": table, "ground_truth": groups,
            "manifest": manifest, "spec": TINY_SPEC}


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
