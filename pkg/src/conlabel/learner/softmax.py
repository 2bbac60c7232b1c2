"""Multinomial logistic regression trained with mini-batch adamax."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ..exceptions import DimensionMismatch, EmptyTrainingSet, LabelOutOfRange
from .optim import (
    AdamaxState,
    LearnerConfig,
    adamax_step,
    augment_jitter,
    batch_loss,
    gradient_of_batch,
    softmax,
)

logger = logging.getLogger(__name__)


@dataclass
class Checkpoint:
    epoch: int
    val_accuracy: float
    coef: np.ndarray
    intercept: np.ndarray


def _check_labels(y, n_classes: int, what: str = "training") -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{what} labels must be one-dimensional")
    if y.size and (not np.issubdtype(y.dtype, np.integer)):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise LabelOutOfRange(f"{what} labels must be integer class ids")
    y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise LabelOutOfRange(
            f"{what} labels must lie in 0..{n_classes - 1}, got {y.min()}..{y.max()}"
        )
    return y


class SoftmaxRegression(ClassifierMixin, BaseEstimator):
    """Softmax regression with zero initialisation and best-epoch selection.

    Training runs exactly ``epochs`` passes of seeded, shuffled mini-batch
    adamax; no early stopping.  After every epoch the model is scored on the
    validation set (or on the training set when none is given) and the
    parameters of the best-scoring epoch are kept, ties going to the
    earliest epoch.

    Parameters
    ----------
    n_classes : int or None
        Number of classes K.  Inferred as ``max(y) + 1`` when None; set it
        explicitly when a training set may be missing the top classes.
    epochs : int
        Number of passes over the training data.  ``0`` leaves the
        zero-initialised model, which predicts the uniform distribution.
    learning_rate, decay, beta1, beta2, epsilon : float
        Adamax settings.  The step size at (0-based) epoch ``e`` is
        ``learning_rate / (1 + decay * e)``.
    batch_size : int
    weight_decay : float
        L2 penalty on the weights.
    jitter : float
        Standard deviation of Gaussian feature noise added to every training
        epoch (feature-space augmentation); 0 disables it.
    warm_start : bool
        Continue from the current parameters instead of zeros when the
        model is already fitted with matching shapes.  Each call still
        runs ``epochs`` new epochs and keeps the best of them.
    random_state : int
        Seed for batch order and jitter.
    """

    def __init__(
        self,
        n_classes=None,
        epochs=200,
        learning_rate=0.001,
        decay=0.001,
        beta1=0.9,
        beta2=0.999,
        batch_size=40,
        epsilon=1e-8,
        weight_decay=0.0,
        jitter=0.0,
        warm_start=False,
        random_state=0,
    ):
        self.n_classes = n_classes
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.decay = decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.batch_size = batch_size
        self.epsilon = epsilon
        self.weight_decay = weight_decay
        self.jitter = jitter
        self.warm_start = warm_start
        self.random_state = random_state

    @classmethod
    def from_config(cls, config: LearnerConfig, n_classes=None, epochs=200, jitter=0.0):
        return cls(
            n_classes=n_classes,
            epochs=epochs,
            learning_rate=config.learning_rate,
            decay=config.decay,
            beta1=config.beta1,
            beta2=config.beta2,
            batch_size=config.batch_size,
            epsilon=config.epsilon,
            weight_decay=config.weight_decay,
            jitter=jitter,
            random_state=config.seed,
        )

    def _config(self) -> LearnerConfig:
        return LearnerConfig(
            learning_rate=self.learning_rate,
            decay=self.decay,
            beta1=self.beta1,
            beta2=self.beta2,
            batch_size=self.batch_size,
            epsilon=self.epsilon,
            weight_decay=self.weight_decay,
            seed=self.random_state,
        )

    def fit(self, X, y, X_val=None, y_val=None):
        config = self._config()
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise EmptyTrainingSet("training set is empty")
        X = check_array(X)
        n_classes = self.n_classes
        if n_classes is None:
            n_classes = int(np.max(y)) + 1 if len(y) else 0
        if n_classes < 2:
            raise ValueError("need at least two classes")
        y = _check_labels(y, n_classes)
        if len(y) != len(X):
            raise ValueError("X and y differ in length")
        if X_val is None:
            X_val, y_val = X, y
        else:
            X_val = check_array(X_val)
            y_val = _check_labels(y_val, n_classes, "validation")
            if X_val.shape[1] != X.shape[1]:
                raise DimensionMismatch("validation features differ in dimension")

        n, d = X.shape
        self.classes_ = np.arange(n_classes)
        if self.warm_start and getattr(self, "coef_", None) is not None and self.coef_.shape == (n_classes, d):
            W, b = self.coef_.copy(), self.intercept_.copy()
        else:
            W, b = np.zeros((n_classes, d)), np.zeros(n_classes)
        self.n_features_in_ = d
        params = [W, b]
        state = AdamaxState.zeros_like(params)
        rng = np.random.default_rng(config.seed)

        def score():
            logits = X_val @ W.T + b
            return float(np.mean(np.argmax(logits, axis=1) == y_val))

        best = Checkpoint(0, score(), W.copy(), b.copy())
        loss_curve, val_scores = [], []
        bs = config.batch_size
        for epoch in range(self.epochs):
            lr = config.lr_at(epoch)
            order = rng.permutation(n)
            Xe = augment_jitter(X, self.jitter, rng) if self.jitter else X
            for start in range(0, n, bs):
                idx = order[start : start + bs]
                grads = gradient_of_batch(params, Xe[idx], y[idx], config.weight_decay)
                adamax_step(params, grads, state, lr, config.beta1, config.beta2, config.epsilon)
            loss_curve.append(batch_loss(params, X, y, config.weight_decay))
            acc = score()
            val_scores.append(acc)
            if epoch == 0 or acc > best.val_accuracy:
                best = Checkpoint(epoch + 1, acc, W.copy(), b.copy())

        self.checkpoint_ = best
        self.coef_ = best.coef
        self.intercept_ = best.intercept
        self.best_epoch_ = best.epoch
        self.best_score_ = best.val_accuracy
        self.loss_curve_ = loss_curve
        self.validation_scores_ = val_scores
        logger.debug(
            "fit: %d samples, %d epochs, best epoch %d (val acc %.4f)",
            n, self.epochs, best.epoch, best.val_accuracy,
        )
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        return X @ self.coef_.T + self.intercept_

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]

    # snapshots -----------------------------------------------------------

    def to_dict(self) -> dict:
        check_is_fitted(self, "coef_")
        return {
            "kind": "softmax-regression",
            "params": self.get_params(),
            "n_features": int(self.n_features_in_),
            "n_classes": int(len(self.classes_)),
            "best_epoch": int(self.best_epoch_),
            "val_accuracy": float(self.best_score_),
            "coef": self.coef_.tolist(),
            "intercept": self.intercept_.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SoftmaxRegression":
        if doc.get("kind") != "softmax-regression":
            raise ValueError(f"not a softmax-regression snapshot: {doc.get('kind')!r}")
        model = cls(**doc["params"])
        model.n_features_in_ = int(doc["n_features"])
        model.classes_ = np.arange(int(doc["n_classes"]))
        model.coef_ = np.asarray(doc["coef"], dtype=np.float64).reshape(
            int(doc["n_classes"]), int(doc["n_features"])
        )
        model.intercept_ = np.asarray(doc["intercept"], dtype=np.float64)
        model.best_epoch_ = int(doc["best_epoch"])
        model.best_score_ = float(doc["val_accuracy"])
        model.checkpoint_ = Checkpoint(
            model.best_epoch_, model.best_score_, model.coef_, model.intercept_
        )
        model.loss_curve_, model.validation_scores_ = [], []
        return model


def save_model(model: SoftmaxRegression, path: str | os.PathLike, meta: dict | None = None) -> None:
    doc = model.to_dict()
    if meta:
        doc["meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path: str | os.PathLike) -> SoftmaxRegression:
    with open(path, encoding="utf-8") as fh:
        return SoftmaxRegression.from_dict(json.load(fh))
