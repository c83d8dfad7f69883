import numpy as np
import pytest

from divsynth.classifier import pretrain_seen_classifier, train_softmax_classifier
from divsynth.errors import ArgumentError, StateError, ValidationError
from divsynth.gan import LossWeights, TrainSettings, build_model, train
from divsynth.grouping import cluster_attribute_dimensions
from divsynth.metrics import GzslMetrics, evaluate_gzsl, harmonic_mean, per_class_accuracy
from divsynth.synthesis import (
    SynthesisPlan,
    SynthesizedSet,
    load_synthesized,
    save_synthesized,
    synthesize_features,
    train_final_classifier,
)


@pytest.fixture(scope="module")
def trained(tiny_benchmark):
    bundle = tiny_benchmark["bundle"]
    groups = cluster_attribute_dimensions(tiny_benchmark["table"], 2, seed=1)
    seen = pretrain_seen_classifier(bundle, epochs=30, learning_rate=1e-2, seed=0)
    model = build_model(bundle.d_x, groups, seen,
                        LossWeights(critic_steps=2), seed=5, hidden_dim=16, d_z=4)
    train(model, bundle, TrainSettings(epochs=5, batch_size=32, seed=2))
    return bundle, model


class TestSynthesize:
    def test_ratio_zero_only_complete(self, trained):
        bundle, model = trained
        plan = SynthesisPlan(n_complete_per_class=7, ratio_per_group=0.0,
                             target_classes=bundle.unseen_classes, seed=4)
        synth = synthesize_features(model, bundle.attributes, plan)
        assert synth.n_rows == bundle.unseen_classes.size * 7
        assert np.all(synth.provenance == 0)

    @pytest.mark.parametrize("n_complete,ratio", [(10, 0.5), (10, 0.25), (3, 0.34),
                                                  (5, 1.5), (8, 0.01)])
    def test_provenance_counts(self, trained, n_complete, ratio):
        bundle, model = trained
        m = model.groups.m
        plan = SynthesisPlan(n_complete_per_class=n_complete, ratio_per_group=ratio,
                             target_classes=bundle.unseen_classes, seed=4)
        synth = synthesize_features(model, bundle.attributes, plan)
        per_group = int(np.floor(ratio * n_complete + 0.5))
        for c in bundle.unseen_classes:
            rows = synth.labels == c
            assert np.sum(rows & (synth.provenance == 0)) == n_complete
            for i in range(1, m + 1):
                assert np.sum(rows & (synth.provenance == i)) == per_group
        assert synth.n_rows == bundle.unseen_classes.size * (n_complete + m * per_group)

    def test_counting_example(self, trained):
        bundle, model = trained
        # 2 groups here: 10 complete + 2 * 5 masked = 20 rows per class.
        plan = SynthesisPlan(n_complete_per_class=10, ratio_per_group=0.5,
                             target_classes=bundle.unseen_classes, seed=0)
        synth = synthesize_features(model, bundle.attributes, plan)
        per_class = 10 + model.groups.m * 5
        assert synth.n_rows == bundle.unseen_classes.size * per_class

    def test_ratio_zero_matches_complete_block(self, trained):
        bundle, model = trained
        kw = dict(n_complete_per_class=6, target_classes=bundle.unseen_classes, seed=9)
        with_masks = synthesize_features(
            model, bundle.attributes, SynthesisPlan(ratio_per_group=0.5, **kw))
        without = synthesize_features(
            model, bundle.attributes, SynthesisPlan(ratio_per_group=0.0, **kw))
        keep = with_masks.provenance == 0
        assert np.array_equal(with_masks.features[keep], without.features)
        assert np.array_equal(with_masks.labels[keep], without.labels)

    def test_rectifier_output_nonnegative(self, trained):
        bundle, model = trained
        plan = SynthesisPlan(n_complete_per_class=5, ratio_per_group=0.5,
                             target_classes=bundle.unseen_classes, seed=1)
        synth = synthesize_features(model, bundle.attributes, plan)
        assert np.all(synth.features >= 0.0)

    def test_untrained_model_state_error(self, trained, tiny_benchmark):
        bundle, model = trained
        fresh = build_model(bundle.d_x, model.groups, model.seen_classifier,
                            LossWeights(), seed=1)
        plan = SynthesisPlan(n_complete_per_class=2, ratio_per_group=0.0,
                             target_classes=bundle.unseen_classes, seed=0)
        with pytest.raises(StateError):
            synthesize_features(fresh, bundle.attributes, plan)

    def test_determinism(self, trained):
        bundle, model = trained
        plan = SynthesisPlan(n_complete_per_class=4, ratio_per_group=0.25,
                             target_classes=bundle.unseen_classes, seed=6)
        a = synthesize_features(model, bundle.attributes, plan)
        b = synthesize_features(model, bundle.attributes, plan)
        assert np.array_equal(a.features, b.features)

    def test_plan_validation(self, trained):
        bundle, _ = trained
        with pytest.raises(ValidationError):
            SynthesisPlan(n_complete_per_class=0, ratio_per_group=0.0,
                          target_classes=bundle.unseen_classes)
        with pytest.raises(ValidationError, match="sanity bound"):
            SynthesisPlan(n_complete_per_class=5, ratio_per_group=12.0,
                          target_classes=bundle.unseen_classes)

    def test_save_load_round_trip(self, trained, tmp_path):
        bundle, model = trained
        plan = SynthesisPlan(n_complete_per_class=3, ratio_per_group=0.5,
                             target_classes=bundle.unseen_classes, seed=2)
        synth = synthesize_features(model, bundle.attributes, plan)
        loaded = load_synthesized(save_synthesized(synth, tmp_path / "s.csv"))
        assert np.array_equal(loaded.features, synth.features)
        assert np.array_equal(loaded.labels, synth.labels)
        assert np.array_equal(loaded.provenance, synth.provenance)


class TestFinalClassifier:
    def test_missing_unseen_class_rejected(self, trained):
        bundle, model = trained
        one_class = bundle.unseen_classes[:1]
        plan = SynthesisPlan(n_complete_per_class=3, ratio_per_group=0.0,
                             target_classes=one_class, seed=0)
        synth = synthesize_features(model, bundle.attributes, plan)
        with pytest.raises(ValidationError, match="zero synthetic rows"):
            train_final_classifier(bundle, synth, epochs=2, learning_rate=1e-2, seed=0)

    def test_oracle_injection_matches_supervised(self, tiny_benchmark):
        bundle = tiny_benchmark["bundle"]
        unseen_idx = bundle.indices("test_unseen")
        injected = SynthesizedSet(features=bundle.features[unseen_idx].copy(),
                                  labels=bundle.labels[unseen_idx].copy(),
                                  provenance=np.zeros(unseen_idx.size, dtype=np.int64))
        final = train_final_classifier(bundle, injected, epochs=120,
                                       learning_rate=1e-2, seed=3)
        metrics = evaluate_gzsl(final, bundle)

        train_idx = bundle.indices("train_seen")
        sup_x = np.concatenate([bundle.features[train_idx],
                                bundle.features[unseen_idx]])
        sup_y = np.concatenate([bundle.labels[train_idx], bundle.labels[unseen_idx]])
        classes = np.union1d(bundle.seen_classes, bundle.unseen_classes)
        supervised = train_softmax_classifier(sup_x, sup_y, classes, epochs=120,
                                              learning_rate=1e-2, seed=11,
                                              name="supervised_oracle")
        sup_metrics = evaluate_gzsl(supervised, bundle)
        assert abs(metrics.u - sup_metrics.u) <= 0.02

    def test_determinism(self, trained):
        bundle, model = trained
        plan = SynthesisPlan(n_complete_per_class=5, ratio_per_group=0.25,
                             target_classes=bundle.unseen_classes, seed=1)
        synth = synthesize_features(model, bundle.attributes, plan)
        a = train_final_classifier(bundle, synth, epochs=10, learning_rate=1e-2, seed=4)
        b = train_final_classifier(bundle, synth, epochs=10, learning_rate=1e-2, seed=4)
        assert all(np.array_equal(p, q)
                   for p, q in zip(a.net.parameters(), b.net.parameters()))


class TestPerClassAccuracy:
    def test_all_correct(self):
        truth = np.array([0, 0, 1, 2])
        acc = per_class_accuracy(truth.copy(), truth, [0, 1, 2])
        assert acc == {0: 1.0, 1: 1.0, 2: 1.0}

    def test_per_class_normalization(self):
        truth = np.array([5, 5, 5, 5, 6])
        pred = np.array([5, 5, 5, 6, 6])
        acc = per_class_accuracy(pred, truth, [5, 6])
        assert acc[5] == 0.75
        assert acc[6] == 1.0

    def test_absent_classes_excluded(self):
        acc = per_class_accuracy(np.array([0]), np.array([0]), [0, 1])
        assert 1 not in acc

    def test_relabeling_permutes_keys(self, rng):
        truth = rng.integers(0, 3, size=30)
        pred = rng.integers(0, 3, size=30)
        base = per_class_accuracy(pred, truth, [0, 1, 2])
        mapping = np.array([7, 5, 9])
        permuted = per_class_accuracy(mapping[pred], mapping[truth], mapping)
        assert permuted == {int(mapping[c]): v for c, v in base.items()}

    def test_empty_truth(self):
        with pytest.raises(ArgumentError):
            per_class_accuracy(np.array([]), np.array([]), [0])


class TestHarmonicMean:
    def test_equal_arguments_identity(self):
        for v in (0.3, 42.0, 1.0):
            assert harmonic_mean(v, v) == pytest.approx(v, abs=1e-12)

    def test_zero_cases(self):
        assert harmonic_mean(0.0, 0.0) == 0.0
        assert harmonic_mean(0.5, 0.0) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(ArgumentError):
            harmonic_mean(-0.1, 0.5)

    def test_bounds_and_symmetry(self, rng):
        for _ in range(200):
            s, u = rng.uniform(0, 1, size=2)
            h = harmonic_mean(s, u)
            assert harmonic_mean(u, s) == h
            assert min(s, u) - 1e-12 <= h <= max(s, u) + 1e-12
            assert (h == 0.0) == (min(s, u) == 0.0)


class TestEvaluateGzsl:
    def test_perfect_classifier(self, tiny_benchmark):
        bundle = tiny_benchmark["bundle"]

        class Perfect:
            class_ids = np.union1d(bundle.seen_classes, bundle.unseen_classes)

            def predict(self, features):
                keys = {bytes(row) for row in np.ascontiguousarray(features)}
                out = []
                for row in features:
                    match = np.flatnonzero(
                        (bundle.features == row).all(axis=1))[0]
                    out.append(bundle.labels[match])
                return np.asarray(out)

        metrics = evaluate_gzsl(Perfect(), bundle)
        assert metrics.u == 1.0 and metrics.s == 1.0 and metrics.h == 1.0

    def test_degenerate_constant_predictor(self, tiny_benchmark):
        bundle = tiny_benchmark["bundle"]
        fixed = int(bundle.seen_classes[0])

        class Constant:
            def predict(self, features):
                return np.full(len(features), fixed)

        metrics = evaluate_gzsl(Constant(), bundle)
        assert metrics.u == 0.0
        assert metrics.h == 0.0

    def test_instance_order_invariance(self, trained):
        bundle, model = trained
        plan = SynthesisPlan(n_complete_per_class=5, ratio_per_group=0.25,
                             target_classes=bundle.unseen_classes, seed=1)
        synth = synthesize_features(model, bundle.attributes, plan)
        final = train_final_classifier(bundle, synth, epochs=10,
                                       learning_rate=1e-2, seed=4)
        base = evaluate_gzsl(final, bundle)
        shuffled = type(bundle)(
            features=bundle.features[::-1].copy(), labels=bundle.labels[::-1].copy(),
            attributes=bundle.attributes, attribute_names=bundle.attribute_names,
            seen_classes=bundle.seen_classes, unseen_classes=bundle.unseen_classes,
            split=bundle.split[::-1].copy())
        again = evaluate_gzsl(final, shuffled)
        assert again.u == base.u and again.s == base.s and again.h == base.h

    def test_metrics_serialization(self, tmp_path):
        metrics = GzslMetrics(per_class_acc={1: 0.5, 0: 1.0}, u=0.5, s=1.0,
                              h=harmonic_mean(1.0, 0.5))
        data = metrics.to_dict()
        assert list(data["per_class"]) == ["0", "1"]
        p1 = metrics.write_json(tmp_path / "m.json")
        p2 = metrics.write_json(tmp_path / "m2.json")
        assert p1.read_bytes() == p2.read_bytes()
        csv_text = metrics.write_csv(tmp_path / "m.csv").read_text()
        assert csv_text.startswith("metric,value\nU,0.5\n")
