import sys

import numpy as np
import pytest

from conlabel.data import partition_store
from conlabel.synth import SynthSpec, corrupt_pool, generate


class FixedProbs:
    """Stand-in classifier returning canned probability rows."""

    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=float)

    def predict_proba(self, X):
        return self.probs[: len(X)]


class LookupModel:
    """Predicts a fixed label per feature row (keyed by the first feature)."""

    def __init__(self, table, n_classes):
        self.table = table
        self.n_classes = n_classes

    def predict_proba(self, X):
        out = np.zeros((len(X), self.n_classes))
        for i, row in enumerate(np.asarray(X)):
            out[i, self.table[float(row[0])]] = 1.0
        return out


def worker_command(dim, classes, *extra):
    return [sys.executable, "-m", "conlabel.learner.worker", "--dim", str(dim), "--classes", str(classes), *extra]


@pytest.fixture
def small_store():
    """4-class, 8-d store with S_i/V1/T1 pools and a 10% corrupted D_u."""
    spec = SynthSpec(n_classes=4, dim=8, n_labeled=30, n_unlabeled=60, separation=4.0, seed=3)
    store = corrupt_pool(generate(spec), 0.1, seed=3)
    return partition_store(store, (40, 20, 20), seed=3)


# criterion number -> (passed, detail), filled in by test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
