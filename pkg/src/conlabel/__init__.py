"""Rule-based dual-learner self-training with ensemble-concordance labeling."""

from .data import ClassTaxonomy, DatasetStore, Instance, Provenance
from .learner import ExternalLearner, LearnerConfig, SoftmaxRegression
from .ssl import ConcordanceSelfTraining, SelectionRule, build_concordance, epoch_schedule, run_ssl
from .synth import SynthSpec, corrupt_pool, generate

__version__ = "0.1.0"

__all__ = [
    "ClassTaxonomy",
    "ConcordanceSelfTraining",
    "DatasetStore",
    "ExternalLearner",
    "Instance",
    "LearnerConfig",
    "Provenance",
    "SelectionRule",
    "SoftmaxRegression",
    "SynthSpec",
    "build_concordance",
    "corrupt_pool",
    "epoch_schedule",
    "generate",
    "run_ssl",
]
