"""Dual-learner self-training and the concordance training set.

Two classifiers start from the same seed set.  After each retraining round,
every network labels its own remaining unlabeled pool and its set grows by
at most ``per_class_quota`` confident predictions per class.
When the sets are large enough, instances on which the two final networks
agree form the concordance set used to train the final model.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_is_fitted

from .data import (
    PSEUDO_LABELED,
    SEED,
    SEED_LABELED,
    SEED_PROVENANCE,
    TEST,
    UNLABELED,
    VALIDATION,
    ClassTaxonomy,
    DatasetStore,
    Instance,
    Provenance,
    labels_of,
)
from .learner import SoftmaxRegression

logger = logging.getLogger(__name__)

TARGET_REACHED = "target_reached"
STALLED = "stalled"
MAX_ITERATIONS = "max_iterations"

DEFAULT_BASE_EPOCHS = 200
DEFAULT_TARGET_SIZE = 5000


def epoch_schedule(k: int, base: int = DEFAULT_BASE_EPOCHS) -> int:
    """Epochs for iteration ``k``: ``base // k`` up to k = 4, then ``base // 4``."""
    if k < 1:
        raise ValueError(f"iteration index must be >= 1, got {k}")
    if base < 4:
        raise ValueError(f"base epochs must be >= 4, got {base}")
    return base // min(k, 4)


@dataclass
class SelectionRule:
    threshold: float = 0.99
    per_class_quota: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.threshold <= 1:
            raise ValueError("threshold must lie in (0, 1]")
        if self.per_class_quota < 1:
            raise ValueError("per_class_quota must be >= 1")


def select_pseudo_labels(
    ids: Sequence[str],
    probs,
    rule: SelectionRule,
    already_owned=frozenset(),
    random_state=None,
) -> list[tuple[str, int, float]]:
    """Pick up to ``rule.per_class_quota`` confident predictions per class.

    A candidate is eligible for class ``c`` when its argmax is ``c`` (lowest
    index on ties), its top probability is at least ``rule.threshold`` and
    it is not in ``already_owned``.  Within each class the picks are a
    uniform sample without replacement.  Returns ``(id, label, confidence)``
    triples ordered by class, then by candidate position.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] != len(ids):
        raise ValueError("probs must have one row per candidate id")
    if random_state is None:
        random_state = rule.seed
    rng = random_state if isinstance(random_state, np.random.Generator) else np.random.default_rng(random_state)
    labels = np.argmax(probs, axis=1)
    conf = probs[np.arange(len(ids)), labels] if len(ids) else np.zeros(0)
    owned = np.array([i in already_owned for i in ids], dtype=bool)
    eligible = (conf >= rule.threshold) & ~owned
    picks = []
    for c in range(probs.shape[1]):
        pool = np.flatnonzero(eligible & (labels == c))
        if pool.size == 0:
            logger.debug("class %d: no eligible candidates", c)
            continue
        take = min(rule.per_class_quota, pool.size)
        chosen = np.sort(rng.choice(pool, size=take, replace=False))
        picks.extend((ids[i], c, float(conf[i])) for i in chosen)
    return picks


@dataclass
class SslState:
    """Progress of a self-training run.

    ``s1``/``s2`` map ids to instances carrying that network's label.
    ``unlabeled`` holds each network's remaining candidate ids.
    """

    iteration: int = 0
    s1: dict[str, Instance] = field(default_factory=dict)
    s2: dict[str, Instance] = field(default_factory=dict)
    n1: object = None
    n2: object = None
    unlabeled: tuple[list[str], list[str]] = field(default_factory=lambda: ([], []))
    target_size: int = DEFAULT_TARGET_SIZE
    history: list[dict] = field(default_factory=list)
    status: str | None = None

    def sets(self):
        return self.s1, self.s2

    def learners(self):
        return self.n1, self.n2

    @property
    def stalled(self) -> bool:
        return self.status == STALLED


def _check_no_leakage(store: DatasetStore) -> None:
    held_out = set(store.pools.get(VALIDATION, ())) | set(store.pools.get(TEST, ()))
    for name in (SEED, UNLABELED):
        if held_out & set(store.pools.get(name, ())):
            raise ValueError(f"pool {name} overlaps the validation/test pools")


def run_ssl(
    store: DatasetStore,
    learner1,
    learner2,
    rule: SelectionRule | None = None,
    base_epochs: int = DEFAULT_BASE_EPOCHS,
    target_size: int = DEFAULT_TARGET_SIZE,
    max_iterations: int | None = None,
    n_jobs: int = 1,
) -> SslState:
    """Grow one training set per learner until both reach ``target_size``.

    Uses pools ``S_i`` (seed), ``V1`` (checkpoint selection) and ``D_u``.
    Learners are estimators with ``set_params(epochs=...)``,
    ``fit(X, y, X_val, y_val)`` and ``predict_proba``; they are refitted in
    place each iteration.  A set that has reached the target stops growing
    and its learner stops retraining.  The run ends with status
    ``target_reached``, ``stalled`` (no additions to either set) or
    ``max_iterations``.
    """
    rule = rule or SelectionRule()
    seed_set = store.pool(SEED)
    val_set = store.pool(VALIDATION)
    if not seed_set:
        raise ValueError("seed pool S_i is empty")
    if not val_set:
        raise ValueError("validation pool V1 is empty")
    if target_size < len(seed_set):
        raise ValueError(f"target_size {target_size} is smaller than |S_i| = {len(seed_set)}")
    _check_no_leakage(store)

    unlabeled_ids = list(store.pools.get(UNLABELED, []))
    row = {ident: i for i, ident in enumerate(unlabeled_ids)}
    X_u = store.features([store[i] for i in unlabeled_ids])
    X_val, y_val = store.features(val_set), labels_of(val_set)

    state = SslState(
        s1={i.id: i for i in seed_set},
        s2={i.id: i for i in seed_set},
        n1=learner1,
        n2=learner2,
        unlabeled=(list(unlabeled_ids), list(unlabeled_ids)),
        target_size=target_size,
    )
    if min(len(state.s1), len(state.s2)) >= target_size:
        state.status = TARGET_REACHED
        return state
    if not unlabeled_ids:
        raise ValueError("unlabeled pool D_u is empty")

    def train_and_select(net: int, k: int, epochs: int):
        s = state.s1 if net == 1 else state.s2
        learner = state.n1 if net == 1 else state.n2
        record = {"network": net, "trained": False, "added": [], "size": len(s)}
        if len(s) >= target_size:
            return record, []
        insts = list(s.values())
        learner.set_params(epochs=epochs)
        learner.fit(store.features(insts), labels_of(insts), X_val, y_val)
        record.update(trained=True, best_epoch=getattr(learner, "best_epoch_", None),
                      val_acc=getattr(learner, "best_score_", None))
        pool = state.unlabeled[net - 1]
        if not pool:
            return record, []
        probs = learner.predict_proba(X_u[[row[i] for i in pool]])
        rng = np.random.default_rng([rule.seed, k, net])
        picks = select_pseudo_labels(pool, probs, rule, already_owned=s.keys(), random_state=rng)
        return record, picks

    k = 0
    while True:
        k += 1
        epochs = epoch_schedule(k, base_epochs)
        if n_jobs > 1:
            with ThreadPoolExecutor(max_workers=2) as ex:
                results = list(ex.map(lambda net: train_and_select(net, k, epochs), (1, 2)))
        else:
            results = [train_and_select(net, k, epochs) for net in (1, 2)]

        # sequential commit
        entry = {"iteration": k, "epochs": epochs, "networks": []}
        total_added = 0
        for net, (record, picks) in zip((1, 2), results):
            s = state.s1 if net == 1 else state.s2
            chosen = set()
            for ident, label, conf in picks:
                base = store[ident]
                s[ident] = Instance(ident, base.payload, base.true_label, label,
                                    Provenance.pseudo(k, net, min(conf, 1.0)))
                chosen.add(ident)
            if chosen:
                state.unlabeled[net - 1][:] = [i for i in state.unlabeled[net - 1] if i not in chosen]
            record["added"] = [[i, lab, conf] for i, lab, conf in picks]
            record["size"] = len(s)
            total_added += len(picks)
            entry["networks"].append(record)
        state.history.append(entry)
        state.iteration = k
        logger.info(
            "iteration %d (%d epochs): |S1| = %d, |S2| = %d, added %d",
            k, epochs, len(state.s1), len(state.s2), total_added,
        )

        if min(len(state.s1), len(state.s2)) >= target_size:
            state.status = TARGET_REACHED
        elif total_added == 0:
            state.status = STALLED
            logger.warning("self-training stalled at iteration %d", k)
        elif max_iterations is not None and k >= max_iterations:
            state.status = MAX_ITERATIONS
        if state.status:
            return state


def build_concordance(s1, s2, n1, n2) -> list[Instance]:
    """Seed instances plus pseudo-labeled instances both learners agree on.

    ``s1`` and ``s2`` are instance sequences (or id->instance mappings).
    Seed-labeled instances enter unconditionally with their seed label.
    Every pseudo-labeled instance of either set is re-predicted by both
    learners and kept, labeled with the agreed class, only if their argmax
    predictions coincide.  The result is deduplicated by id, seeds first.
    """
    s1 = list(s1.values()) if isinstance(s1, dict) else list(s1)
    s2 = list(s2.values()) if isinstance(s2, dict) else list(s2)
    seeds: dict[str, Instance] = {}
    pseudo: dict[str, Instance] = {}
    for inst in s1 + s2:
        kind = inst.provenance.kind if inst.provenance else None
        if kind == SEED_LABELED:
            seeds.setdefault(inst.id, inst)
        elif inst.id not in seeds:
            pseudo.setdefault(inst.id, inst)
    out = list(seeds.values())
    candidates = [inst for ident, inst in pseudo.items() if ident not in seeds]
    if not candidates:
        return out
    X = np.asarray([inst.payload for inst in candidates], dtype=np.float64)
    a1 = np.argmax(n1.predict_proba(X), axis=1)
    a2 = np.argmax(n2.predict_proba(X), axis=1)
    for inst, p1, p2 in zip(candidates, a1, a2):
        if p1 == p2:
            out.append(inst.relabel(int(p1)))
    logger.info("concordance: %d seeds, %d of %d pseudo-labels agreed",
                len(seeds), len(out) - len(seeds), len(candidates))
    return out


def pseudo_labeled(instances) -> list[Instance]:
    return [i for i in instances if i.provenance is not None and i.provenance.kind == PSEUDO_LABELED]


class ConcordanceSelfTraining(ClassifierMixin, BaseEstimator):
    """Self-training classifier built on two learners and their agreement.

    ``fit(X, y, X_val, y_val)`` treats ``y == -1`` as unlabeled, runs the
    dual self-training loop, builds the concordance set and trains
    ``final_estimator`` (default: a clone of ``estimator1`` with
    ``base_epochs`` epochs) on it.  Prediction uses that final model.

    Parameters
    ----------
    estimator1, estimator2 : estimators or None
        The two networks; default to softmax regressions with batch sizes
        40 and 100.
    final_estimator : estimator or None
    threshold, per_class_quota : selection rule settings
    base_epochs, target_size, max_iterations : loop settings
    random_state : int
        Seed for pseudo-label sampling.
    """

    def __init__(
        self,
        estimator1=None,
        estimator2=None,
        final_estimator=None,
        threshold=0.99,
        per_class_quota=5,
        base_epochs=DEFAULT_BASE_EPOCHS,
        target_size=DEFAULT_TARGET_SIZE,
        max_iterations=None,
        random_state=0,
    ):
        self.estimator1 = estimator1
        self.estimator2 = estimator2
        self.final_estimator = final_estimator
        self.threshold = threshold
        self.per_class_quota = per_class_quota
        self.base_epochs = base_epochs
        self.target_size = target_size
        self.max_iterations = max_iterations
        self.random_state = random_state

    def fit(self, X, y, X_val=None, y_val=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        labeled = y >= 0
        if not labeled.any():
            raise ValueError("no labeled samples")
        K = int(max(y.max(), -1 if y_val is None else np.max(y_val))) + 1
        est1 = clone(self.estimator1) if self.estimator1 is not None else SoftmaxRegression(batch_size=40)
        est2 = clone(self.estimator2) if self.estimator2 is not None else SoftmaxRegression(batch_size=100)
        for est in (est1, est2):
            if "n_classes" in est.get_params() and est.get_params()["n_classes"] is None:
                est.set_params(n_classes=K)

        store = DatasetStore(ClassTaxonomy.numbered(max(K, 2)), dim=X.shape[1])
        for i, (x, label) in enumerate(zip(X, y)):
            if label >= 0:
                store.add(Instance(f"x{i}", tuple(x.tolist()), None, int(label), SEED_PROVENANCE))
            else:
                store.add(Instance(f"x{i}", tuple(x.tolist())))
        store.pools[SEED] = [f"x{i}" for i in np.flatnonzero(labeled)]
        store.pools[UNLABELED] = [f"x{i}" for i in np.flatnonzero(~labeled)]
        if X_val is None:
            # score checkpoints on copies of the labeled samples
            X_val, y_val = X[labeled], y[labeled]
        for j, (x, label) in enumerate(zip(np.asarray(X_val, dtype=np.float64), y_val)):
            store.add(Instance(f"v{j}", tuple(x.tolist()), None, int(label), SEED_PROVENANCE))
        store.pools[VALIDATION] = [f"v{j}" for j in range(len(y_val))]

        rule = SelectionRule(self.threshold, self.per_class_quota, self.random_state)
        target = max(self.target_size, len(store.pools[SEED]))
        state = run_ssl(store, est1, est2, rule, self.base_epochs, target, self.max_iterations)
        if state.iteration == 0:
            s_tr = list(state.s1.values())
        else:
            s_tr = build_concordance(state.s1, state.s2, state.n1, state.n2)

        final = clone(self.final_estimator) if self.final_estimator is not None else clone(est1)
        final.set_params(epochs=self.base_epochs)
        X_val_arr = store.features(store.pool(VALIDATION))
        final.fit(store.features(s_tr), labels_of(s_tr), X_val_arr, labels_of(store.pool(VALIDATION)))

        def positions(insts):
            return np.array([int(i.id[1:]) for i in insts if i.id.startswith("x")], dtype=np.int64)

        self.state_ = state
        self.status_ = state.status
        self.n_iter_ = state.iteration
        self.history_ = state.history
        self.s1_indices_ = positions(state.s1.values())
        self.s2_indices_ = positions(state.s2.values())
        self.concordance_indices_ = positions(s_tr)
        self.concordance_labels_ = labels_of(s_tr)
        self.final_estimator_ = final
        self.classes_ = np.arange(max(K, 2))
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "final_estimator_")
        return self.final_estimator_.predict_proba(X)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
