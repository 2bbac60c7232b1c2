"""Adapter for learners living in a child process.

The child speaks line-delimited JSON on stdin/stdout, one request and one
reply per line, strictly alternating::

    -> {"op": "hello"}
    <- {"ok": true, "dim": d, "classes": K}
    -> {"op": "fit", "train": [{"x": [...], "y": c}, ...], "val": [...],
        "epochs": n, "config": {...}}
    <- {"ok": true, "best_epoch": e, "val_acc": a}
    -> {"op": "predict", "instances": [[...], ...]}
    <- {"ok": true, "probs": [[...], ...]}

Any ``{"ok": false, "error": msg}`` reply raises ExternalLearnerError.
"""

from __future__ import annotations

import json
import logging
import shlex
import subprocess
import threading

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array

from ..exceptions import DimensionMismatch, EmptyTrainingSet, ExternalLearnerError
from .softmax import _check_labels

logger = logging.getLogger(__name__)


class LearnerProcess:
    """One child process; one request in flight at a time."""

    def __init__(self, command, timeout: float | None = None):
        if isinstance(command, str):
            command = shlex.split(command)
        self.command = list(command)
        self.timeout = timeout
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ExternalLearnerError(f"cannot start {self.command}: {exc}") from exc

    def request(self, message: dict) -> dict:
        op = message.get("op")
        with self._lock:
            if self._proc.poll() is not None:
                raise ExternalLearnerError(
                    f"learner process exited with status {self._proc.returncode} before {op!r}"
                )
            try:
                self._proc.stdin.write(json.dumps(message) + "\n")
                self._proc.stdin.flush()
                line = self._proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise ExternalLearnerError(f"{op!r}: pipe to learner broke: {exc}") from exc
        if not line:
            raise ExternalLearnerError(f"{op!r}: learner closed its output without replying")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ExternalLearnerError(f"{op!r}: malformed reply {line[:200]!r}") from exc
        if not isinstance(reply, dict) or "ok" not in reply:
            raise ExternalLearnerError(f"{op!r}: reply lacks an 'ok' field")
        if not reply["ok"]:
            raise ExternalLearnerError(f"{op!r} failed: {reply.get('error', 'unknown error')}")
        return reply

    def close(self) -> None:
        proc = getattr(self, "_proc", None)
        if proc is None or proc.poll() is not None:
            return
        try:
            proc.stdin.close()
            proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()
        finally:
            proc.stdout.close()

    def __del__(self):
        self.close()


class ExternalLearner(ClassifierMixin, BaseEstimator):
    """Classifier whose training and inference run in a child process.

    Parameters
    ----------
    command : str or list of str
        Command line starting the learner process.
    n_classes : int
        Expected class count; checked against the child's handshake.
    epochs : int
    config : dict or None
        Passed through verbatim in every ``fit`` request.
    """

    def __init__(self, command=None, n_classes=None, epochs=200, config=None):
        self.command = command
        self.n_classes = n_classes
        self.epochs = epochs
        self.config = config

    def _connection(self) -> LearnerProcess:
        proc = getattr(self, "_process", None)
        if proc is None:
            if not self.command:
                raise ExternalLearnerError("no learner command configured")
            proc = LearnerProcess(self.command)
            hello = proc.request({"op": "hello"})
            try:
                self.n_features_in_ = int(hello["dim"])
                classes = int(hello["classes"])
            except (KeyError, TypeError, ValueError) as exc:
                proc.close()
                raise ExternalLearnerError(f"bad hello reply {hello}") from exc
            if self.n_classes is not None and classes != self.n_classes:
                proc.close()
                raise ExternalLearnerError(
                    f"learner reports {classes} classes, expected {self.n_classes}"
                )
            self.classes_ = np.arange(classes)
            self._process = proc
        return proc

    def close(self) -> None:
        proc = self.__dict__.pop("_process", None)
        if proc is not None:
            proc.close()

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop("_process", None)
        return state

    def _check_dim(self, X: np.ndarray) -> None:
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(f"expected {self.n_features_in_} features, got {X.shape[1]}")

    def fit(self, X, y, X_val=None, y_val=None):
        proc = self._connection()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise EmptyTrainingSet("training set is empty")
        X = check_array(X)
        self._check_dim(X)
        y = _check_labels(y, len(self.classes_))
        if X_val is None:
            X_val, y_val = X, y
        X_val = check_array(X_val)
        self._check_dim(X_val)
        y_val = _check_labels(y_val, len(self.classes_), "validation")

        def records(A, labels):
            return [{"x": row, "y": int(c)} for row, c in zip(A.tolist(), labels)]

        reply = proc.request(
            {
                "op": "fit",
                "train": records(X, y),
                "val": records(X_val, y_val),
                "epochs": int(self.epochs),
                "config": dict(self.config or {}),
            }
        )
        try:
            self.best_epoch_ = int(reply["best_epoch"])
            self.best_score_ = float(reply["val_acc"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ExternalLearnerError(f"bad fit reply {reply}") from exc
        self.fitted_ = True
        return self

    def predict_proba(self, X):
        if not getattr(self, "fitted_", False):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("ExternalLearner is not fitted")
        proc = self._connection()
        X = check_array(X)
        self._check_dim(X)
        reply = proc.request({"op": "predict", "instances": X.tolist()})
        try:
            probs = np.asarray(reply["probs"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ExternalLearnerError("bad predict reply") from exc
        if probs.shape != (len(X), len(self.classes_)):
            raise ExternalLearnerError(
                f"predict returned shape {probs.shape}, expected {(len(X), len(self.classes_))}"
            )
        if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
            raise ExternalLearnerError("predict returned rows that are not distributions")
        return probs

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
