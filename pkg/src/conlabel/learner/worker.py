"""Reference learner process speaking the external-learner protocol.

Wraps the built-in softmax regression.  Fault-injection flags make it a
scripted mock for protocol tests::

    python -m conlabel.learner.worker --dim 16 --classes 12
    python -m conlabel.learner.worker --dim 4 --classes 3 --fail-on fit
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .optim import LearnerConfig
from .softmax import SoftmaxRegression

CONFIG_KEYS = ("learning_rate", "decay", "beta1", "beta2", "batch_size", "epsilon", "weight_decay", "seed")


class SoftmaxWorker:
    def __init__(self, dim: int, classes: int):
        self.dim = dim
        self.classes = classes
        self.model: SoftmaxRegression | None = None

    def hello(self, msg):
        return {"dim": self.dim, "classes": self.classes}

    def fit(self, msg):
        train, val = msg["train"], msg.get("val") or msg["train"]
        raw = msg.get("config") or {}
        config = LearnerConfig(**{k: v for k, v in raw.items() if k in CONFIG_KEYS})
        fresh = SoftmaxRegression.from_config(
            config, n_classes=self.classes, epochs=int(msg["epochs"]), jitter=float(raw.get("jitter", 0.0))
        )
        if raw.get("warm_start") and self.model is not None:
            model = self.model.set_params(**{**fresh.get_params(), "warm_start": True})
        else:
            model = fresh
        model.fit(
            np.array([r["x"] for r in train], dtype=np.float64),
            np.array([r["y"] for r in train], dtype=np.int64),
            np.array([r["x"] for r in val], dtype=np.float64),
            np.array([r["y"] for r in val], dtype=np.int64),
        )
        self.model = model
        return {"best_epoch": model.best_epoch_, "val_acc": model.best_score_}

    def predict(self, msg):
        if self.model is None:
            raise RuntimeError("predict before fit")
        probs = self.model.predict_proba(np.array(msg["instances"], dtype=np.float64))
        return {"probs": probs.tolist()}


def serve(worker, stdin=sys.stdin, stdout=sys.stdout, fail_on=(), garbage_on=(), exit_on=()):
    def send(obj):
        stdout.write(json.dumps(obj) + "\n")
        stdout.flush()

    for line in stdin:
        if not line.strip():
            continue
        try:
            msg = json.loads(line)
            op = msg["op"]
        except (json.JSONDecodeError, KeyError, TypeError):
            send({"ok": False, "error": "malformed request"})
            continue
        if op in exit_on:
            return 1
        if op in garbage_on:
            stdout.write("this is not json\n")
            stdout.flush()
            continue
        if op in fail_on:
            send({"ok": False, "error": f"injected failure in {op}"})
            continue
        handler = getattr(worker, op, None) if op in ("hello", "fit", "predict") else None
        if handler is None:
            send({"ok": False, "error": f"unknown op {op!r}"})
            continue
        try:
            send({"ok": True, **handler(msg)})
        except Exception as exc:  # reported over the wire, never fatal
            send({"ok": False, "error": f"{type(exc).__name__}: {exc}"})
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dim", type=int, required=True)
    parser.add_argument("--classes", type=int, required=True)
    parser.add_argument("--fail-on", action="append", default=[], help="reply ok=false to this op")
    parser.add_argument("--garbage-on", action="append", default=[], help="reply with non-JSON")
    parser.add_argument("--exit-on", action="append", default=[], help="exit without replying")
    args = parser.parse_args(argv)
    return serve(
        SoftmaxWorker(args.dim, args.classes),
        fail_on=set(args.fail_on),
        garbage_on=set(args.garbage_on),
        exit_on=set(args.exit_on),
    )


if __name__ == "__main__":
    sys.exit(main())
