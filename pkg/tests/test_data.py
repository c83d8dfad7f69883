import json

import numpy as np
import pytest

from divsynth.data import (
    DatasetBundle,
    SyntheticSpec,
    generate_synthetic_benchmark,
    load_dataset,
    load_embeddings,
    load_ground_truth_groups,
    normalize_attributes,
    save_dataset,
    validate_bundle,
)
from divsynth.errors import LoadError, ShapeError, ValidationError


def small_bundle():
    features = np.arange(12, dtype=float).reshape(6, 2) / 10.0
    labels = np.array([0, 0, 1, 1, 2, 2])
    attributes = np.array([[0.1, 0.9], [0.5, 0.4], [0.9, 0.2]])
    split = np.array(["train_seen", "test_seen", "train_seen", "test_seen",
                      "test_unseen", "test_unseen"])
    return DatasetBundle(features=features, labels=labels, attributes=attributes,
                         attribute_names=["a0", "a1"], seen_classes=[0, 1],
                         unseen_classes=[2], split=split)


def test_round_trip_identity(tmp_path):
    bundle = small_bundle()
    manifest = save_dataset(bundle, tmp_path / "ds")
    loaded = load_dataset(manifest)
    assert loaded.equals(bundle)


def test_round_trip_full_precision(tmp_path, tiny_benchmark):
    bundle = tiny_benchmark["bundle"]
    manifest = save_dataset(bundle, tmp_path / "ds")
    loaded = load_dataset(manifest)
    assert np.array_equal(loaded.features, bundle.features)
    assert np.array_equal(loaded.attributes, bundle.attributes)
    assert loaded.equals(bundle)


def test_missing_file_names_the_file(tmp_path):
    with pytest.raises(LoadError, match="manifest.json"):
        load_dataset(tmp_path / "nope" / "manifest.json")
    bundle = small_bundle()
    manifest = save_dataset(bundle, tmp_path / "ds")
    (tmp_path / "ds" / "features.csv").unlink()
    with pytest.raises(LoadError, match="features.csv"):
        load_dataset(manifest)


def test_class_without_attribute_row(tmp_path):
    bundle = small_bundle()
    manifest = save_dataset(bundle, tmp_path / "ds")
    raw = json.loads(manifest.read_text())
    raw["unseen_classes"] = [5]
    manifest.write_text(json.dumps(raw))
    with pytest.raises(ValidationError, match="class without attribute row"):
        load_dataset(manifest)


def test_overlapping_class_sets(tmp_path):
    bundle = small_bundle()
    manifest = save_dataset(bundle, tmp_path / "ds")
    raw = json.loads(manifest.read_text())
    raw["unseen_classes"] = [1, 2]
    manifest.write_text(json.dumps(raw))
    with pytest.raises(ValidationError, match="overlapping class sets"):
        load_dataset(manifest)


def test_save_rejects_invalid_bundles(tmp_path):
    bundle = small_bundle()
    bundle.unseen_classes = np.array([], dtype=np.int64)
    bundle.labels = np.array([0, 0, 1, 1, 1, 0])
    bundle.split = np.array(["train_seen", "test_seen"] * 3)
    with pytest.raises(ValidationError, match="no unseen classes"):
        save_dataset(bundle, tmp_path / "ds")

    bundle = small_bundle()
    bundle.features[2, 1] = np.nan
    with pytest.raises(ValidationError, match="non-finite feature"):
        save_dataset(bundle, tmp_path / "ds")
    assert not (tmp_path / "ds" / "features.csv").exists()


def test_split_shape_mismatch(tmp_path):
    bundle = small_bundle()
    manifest = save_dataset(bundle, tmp_path / "ds")
    splits = (tmp_path / "ds" / "splits.csv").read_text().splitlines()
    (tmp_path / "ds" / "splits.csv").write_text("\n".join(splits[:-1]) + "\n")
    with pytest.raises(ShapeError):
        load_dataset(manifest)


def test_minmax_normalization_on_load(tmp_path):
    bundle = small_bundle()
    manifest = save_dataset(bundle, tmp_path / "ds")
    # Rewrite attributes on a raw scale and declare minmax in the manifest.
    (tmp_path / "ds" / "attributes.csv").write_text(
        "class_id,a0,a1\n0,2.0,30.0\n1,6.0,10.0\n2,10.0,10.0\n")
    raw = json.loads(manifest.read_text())
    raw["normalization"] = "minmax"
    manifest.write_text(json.dumps(raw))
    loaded = load_dataset(manifest)
    expected = np.array([[0.0, 1.0], [0.5, 0.0], [1.0, 0.0]])
    assert np.allclose(loaded.attributes, expected)
    assert loaded.normalization_record["mode"] == "minmax"


def test_normalize_constant_dimension_maps_to_zero():
    scaled, record = normalize_attributes(np.array([[3.0, 1.0], [3.0, 2.0]]))
    assert np.array_equal(scaled[:, 0], [0.0, 0.0])
    assert record["ranges"][0] == 0.0


def test_synthetic_determinism():
    spec = SyntheticSpec(seed=21)
    a, ta, ga = generate_synthetic_benchmark(spec)
    b, tb, gb = generate_synthetic_benchmark(spec)
    assert a.equals(b)
    assert np.array_equal(ta.vectors, tb.vectors)
    assert np.array_equal(ga, gb)


def test_split_partition_and_ratio(tiny_benchmark):
    bundle = tiny_benchmark["bundle"]
    sizes = {b: bundle.indices(b).size for b in ("train_seen", "test_seen",
                                                 "test_unseen")}
    assert sum(sizes.values()) == bundle.n_instances
    per = tiny_benchmark["spec"].instances_per_class
    for c in bundle.seen_classes:
        members = bundle.labels == c
        assert np.sum(members & (bundle.split == "train_seen")) == round(0.8 * per)
        assert np.sum(members & (bundle.split == "test_unseen")) == 0
    for c in bundle.unseen_classes:
        assert np.all(bundle.split[bundle.labels == c] == "test_unseen")


def test_no_masking_means_full_attribute_generation():
    spec = SyntheticSpec(d_a=8, d_x=6, m_true=2, n_seen_classes=3,
                         n_unseen_classes=2, instances_per_class=8,
                         p_miss=0.0, noise_sigma=0.05, seed=5)
    noisy, _, _ = generate_synthetic_benchmark(spec)
    clean, _, _ = generate_synthetic_benchmark(
        SyntheticSpec(**{**spec.__dict__, "noise_sigma": 0.0}))
    # Every instance is its class's clean feature plus gaussian noise.
    deviation = np.abs(noisy.features - clean.features)
    assert deviation.max() < 6 * spec.noise_sigma
    for c in range(clean.n_classes):
        rows = clean.features[clean.labels == c]
        assert np.all(rows == rows[0])


def test_deterministic_map_duplicates_instances():
    spec = SyntheticSpec(d_a=8, d_x=6, m_true=2, n_seen_classes=3,
                         n_unseen_classes=2, instances_per_class=2,
                         p_miss=0.0, noise_sigma=0.0, seed=9)
    bundle, _, _ = generate_synthetic_benchmark(spec)
    for c in range(bundle.n_classes):
        rows = bundle.features[bundle.labels == c]
        assert np.array_equal(rows[0], rows[1])


def test_synthetic_spec_validation():
    with pytest.raises(ValidationError, match="divide"):
        generate_synthetic_benchmark(SyntheticSpec(d_a=10, m_true=4))
    with pytest.raises(ValidationError, match="p_miss"):
        generate_synthetic_benchmark(SyntheticSpec(p_miss=1.5))


def test_embeddings_and_ground_truth_round_trip(tiny_benchmark):
    table = load_embeddings(tiny_benchmark["manifest"])
    assert np.array_equal(table.vectors, tiny_benchmark["table"].vectors)
    assert table.names == tiny_benchmark["table"].names
    groups = load_ground_truth_groups(tiny_benchmark["manifest"])
    assert np.array_equal(groups, tiny_benchmark["ground_truth"])


def test_validate_bundle_split_class_consistency():
    bundle = small_bundle()
    bundle.split[4] = "train_seen"   # class 2 is unseen
    with pytest.raises(ValidationError, match="train_seen"):
        validate_bundle(bundle)
