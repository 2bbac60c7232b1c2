"""Classifiers usable as the two self-training networks."""

from .external import ExternalLearner, LearnerProcess
from .optim import (
    AdamaxState,
    LearnerConfig,
    adamax_step,
    augment_jitter,
    batch_loss,
    cross_entropy_loss,
    gradient_of_batch,
    softmax,
)
from .softmax import Checkpoint, SoftmaxRegression, load_model, save_model

__all__ = [
    "AdamaxState",
    "Checkpoint",
    "ExternalLearner",
    "LearnerConfig",
    "LearnerProcess",
    "SoftmaxRegression",
    "adamax_step",
    "augment_jitter",
    "batch_loss",
    "cross_entropy_loss",
    "gradient_of_batch",
    "load_model",
    "save_model",
    "softmax",
]
