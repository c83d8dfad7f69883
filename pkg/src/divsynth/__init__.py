"""Diverse feature synthesis for generalized zero-shot learning."""

__version__ = "0.1.0"

from .augmentation import AugmentedAttribute, build_augmented_set, mask_group
from .classifier import SoftmaxClassifier, pretrain_seen_classifier, train_softmax_classifier
from .config import ExperimentConfig, load_config
from .data import (
    DatasetBundle,
    EmbeddingTable,
    SyntheticSpec,
    generate_synthetic_benchmark,
    load_dataset,
    save_dataset,
)
from .gan import (
    DiverseFeatureGan,
    LossWeights,
    TrainSettings,
    TrainingLog,
    build_model,
    critic_loss,
    generator_loss,
    self_supervision_loss,
    train,
)
from .grouping import (
    AttributeGroups,
    cluster_attribute_dimensions,
    clustering_objective,
    profile_embeddings,
    update_centroids,
)
from .metrics import GzslMetrics, evaluate_gzsl, harmonic_mean, per_class_accuracy
from .synthesis import (
    SynthesisPlan,
    SynthesizedSet,
    synthesize_features,
    train_final_classifier,
)
