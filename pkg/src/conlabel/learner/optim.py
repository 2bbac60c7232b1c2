"""Softmax cross-entropy and the adamax update."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import BadDistribution, ShapeMismatch

LOG_FLOOR = 1e-12


@dataclass
class LearnerConfig:
    """Optimiser hyperparameters shared by the built-in and external learners.

    ``decay`` is a per-epoch learning-rate decay, ``lr / (1 + decay * epoch)``;
    ``weight_decay`` is a separate L2 penalty and is off by default.
    """

    learning_rate: float = 0.001
    decay: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 40
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.decay < 0 or self.weight_decay < 0:
            raise ValueError("decay and weight_decay must be non-negative")

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate / (1.0 + self.decay * epoch)


@dataclass
class AdamaxState:
    m: list[np.ndarray] = field(default_factory=list)
    u: list[np.ndarray] = field(default_factory=list)
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamaxState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return z


def cross_entropy_loss(probs, target: int) -> float:
    """``-ln(max(probs[target], 1e-12))`` for a single distribution."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or not np.isfinite(p).all():
        raise BadDistribution(f"not a probability vector: {p}")
    if abs(p.sum() - 1.0) > 1e-6:
        raise BadDistribution(f"probabilities sum to {p.sum()}")
    if not 0 <= target < p.size:
        raise BadDistribution(f"target {target} outside 0..{p.size - 1}")
    return float(-np.log(max(p[target], LOG_FLOOR)))


def batch_loss(params, X: np.ndarray, y: np.ndarray, weight_decay: float = 0.0) -> float:
    W, b = params
    P = softmax(X @ W.T + b)
    picked = np.maximum(P[np.arange(len(y)), y], LOG_FLOOR)
    loss = float(-np.log(picked).mean())
    if weight_decay:
        loss += 0.5 * weight_decay * float(np.sum(W * W))
    return loss


def gradient_of_batch(params, X: np.ndarray, y: np.ndarray, weight_decay: float = 0.0):
    """Analytic gradient of the mean softmax cross-entropy.

    Returns ``(dW, db)`` with ``dW = (P - Y)^T X / n`` and ``db`` the mean
    residual.
    """
    W, b = params
    n = len(y)
    if n == 0:
        raise ValueError("gradient of an empty batch")
    R = softmax(X @ W.T + b)
    R[np.arange(n), y] -= 1.0
    R /= n
    dW = R.T @ X
    if weight_decay:
        dW += weight_decay * W
    return dW, R.sum(axis=0)


def adamax_step(params, grads, state: AdamaxState, lr: float, beta1=0.9, beta2=0.999, epsilon=1e-8):
    """One adamax update, in place on ``params`` and ``state``.

    ``lr`` is the already-decayed step size for the current epoch.
    """
    if len(params) != len(grads) or len(state.m) != len(params):
        raise ShapeMismatch("params, grads and state differ in length")
    state.t += 1
    step = lr / (1.0 - beta1**state.t)
    for p, g, m, u in zip(params, grads, state.m, state.u):
        if p.shape != g.shape or m.shape != p.shape or u.shape != p.shape:
            raise ShapeMismatch(f"shape {g.shape} does not match parameter {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        np.maximum(beta2 * u, np.abs(g), out=u)
        p -= step * m / (u + epsilon)
    return params, state


def augment_jitter(X, sigma: float, seed=None) -> np.ndarray:
    """Copies of ``X`` with i.i.d. Gaussian noise of standard deviation ``sigma``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    X = np.array(X, dtype=np.float64, copy=True)
    if sigma == 0:
        return X
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return X + rng.normal(0.0, sigma, size=X.shape)
