"""End-to-end experiment: data -> dedup -> partition -> self-training ->
concordance -> baselines -> summary.

Every artifact written here embeds the config hash and seed.  Nothing
time- or host-dependent is written, so re-running a config reproduces the
same bytes.
"""

from __future__ import annotations

import contextlib
import dataclasses
import json
import logging
import os
import re
from dataclasses import dataclass

from . import data as D
from .config import PipelineConfig
from .dedup import dedup_hashes, dhash, load_image
from .exceptions import ConlabelError
from .learner import ExternalLearner, SoftmaxRegression, save_model
from .metrics import (
    BaselineReport,
    baseline_report,
    class_count_cv,
    class_counts,
    label_error_rate,
)
from .ssl import SelectionRule, SslState, build_concordance, epoch_schedule, run_ssl
from .synth import corrupt_pool, generate

logger = logging.getLogger(__name__)

S1, S2, S3, S4, S_TR = "S1", "S2", "S3", "S4", "S_tr"


class StageError(Exception):
    def __init__(self, stage: str, code: str, message: str):
        super().__init__(f"[{stage}] {code}: {message}")
        self.stage = stage
        self.code = code
        self.message = message

    def to_dict(self) -> dict:
        return {"stage": self.stage, "code": self.code, "message": self.message}


def error_code(exc: BaseException) -> str:
    """Machine-readable snake_case code for an exception."""
    if isinstance(exc, ConlabelError):
        return exc.code
    return re.sub(r"(?<!^)(?=[A-Z])", "_", type(exc).__name__).lower()


@contextlib.contextmanager
def stage(name: str):
    logger.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except (ConlabelError, OSError, ValueError, KeyError, RuntimeError) as exc:
        raise StageError(name, error_code(exc), str(exc)) from exc


def write_json(path: str, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------


def prepare_store(config: PipelineConfig) -> D.DatasetStore:
    """Load or synthesise the feature store and make sure it is partitioned."""
    with stage("data"):
        if config.manifest:
            store = D.load_manifest(config.manifest)
        else:
            store = generate(config.synth)
            if config.corruption:
                store = corrupt_pool(store, config.corruption, config.seed)
        if config.labels:
            oracle = D.load_oracle_labels(config.labels)
            for ident, label in oracle.items():
                if ident in store:
                    store.instances[ident] = dataclasses.replace(store[ident], true_label=label)
        if store.kind != D.FEATURES:
            raise ValueError("the learners need a feature manifest")
    if config.images_manifest:
        with stage("dedup"):
            images = D.load_manifest(config.images_manifest)
            report = dedup_store(images, config.dedup_threshold, os.path.dirname(config.images_manifest))
            removed = {rid for rid, _, _ in report.removed}
            for name, ids in store.pools.items():
                store.pools[name] = [i for i in ids if i not in removed]
            for rid in removed:
                store.instances.pop(rid, None)
    if D.SEED not in store.pools:
        with stage("partition"):
            p = config.partition
            D.partition_store(store, (p.train, p.val, p.test), config.seed, p.strict)
    with stage("partition"):
        store.check()
    return store


def dedup_store(images: D.DatasetStore, threshold: int, base_dir: str = "", decoder=None):
    hashes = []
    for inst in images.instances.values():
        path = inst.payload if os.path.isabs(inst.payload) else os.path.join(base_dir, inst.payload)
        hashes.append((inst.id, dhash(load_image(path, decoder))))
    return dedup_hashes(hashes, threshold)


def make_learners(config: PipelineConfig, n_classes: int):
    first = epoch_schedule(1, config.base_epochs)
    return config.n1.build(n_classes, first), config.n2.build(n_classes, first)


def make_final(config: PipelineConfig, n_classes: int):
    return config.final.build(n_classes, config.base_epochs, warm_start=False)


def self_train(config: PipelineConfig, store: D.DatasetStore) -> SslState:
    with stage("run-ssl"):
        n1, n2 = make_learners(config, store.n_classes)
        rule = SelectionRule(config.selection.threshold, config.selection.per_class_quota, config.seed)
        return run_ssl(
            store, n1, n2, rule,
            base_epochs=config.base_epochs,
            target_size=config.target_size,
            max_iterations=config.max_iterations,
            n_jobs=config.n_jobs,
        )


def concordance(state: SslState) -> list[D.Instance]:
    with stage("concordance"):
        if state.iteration == 0:
            return list(state.s1.values())
        return build_concordance(state.s1, state.s2, state.n1, state.n2)


def oracle_for(store: D.DatasetStore, config: PipelineConfig) -> dict[str, int]:
    if config.labels:
        return D.load_oracle_labels(config.labels)
    return D.truth_oracle(store.instances.values())


def run_baselines(config, store, sets: dict[str, list[D.Instance]]) -> BaselineReport:
    """Train the lower/mid/upper/ssl models and score them on T1."""
    with stage("baselines"):
        val, test = store.pool(D.VALIDATION), store.pool(D.TEST)
        named = {"lower": D.SEED, "mid": S3, "upper": S4, "ssl": S_TR}
        training = {
            row: (set_name, store.features(sets[set_name]), D.labels_of(sets[set_name]))
            for row, set_name in named.items()
            if sets.get(set_name)
        }
        report = baseline_report(
            lambda: make_final(config, store.n_classes),
            training,
            store.features(test),
            D.labels_of(test),
            store.n_classes,
            store.features(val),
            D.labels_of(val),
        )
        report.meta = config.provenance()
        return report


def write_baselines(report: BaselineReport, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_text(os.path.join(out_dir, "report.json"), report.to_json())
    write_text(os.path.join(out_dir, "table.csv"), report.to_csv())
    if "ssl" in report.reports:
        for roc in report.reports["ssl"].rocs:
            write_text(os.path.join(out_dir, f"roc_class_{roc.class_id}.csv"), roc.to_csv())


def write_history(state: SslState, path: str, meta: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in state.history:
            fh.write(json.dumps({**entry, **meta}) + "\n")


def save_learner(model, path: str, meta: dict) -> None:
    if isinstance(model, SoftmaxRegression) and hasattr(model, "coef_"):
        save_model(model, path, meta)


def close_learners(*models) -> None:
    for model in models:
        if isinstance(model, ExternalLearner):
            model.close()


def _pct(x):
    return None if x is None else round(100.0 * x, 6)


@dataclass
class ExperimentResult:
    summary: dict
    state: SslState
    sets: dict
    report: BaselineReport | None


def run_experiment(config: PipelineConfig, out_dir: str | None = None) -> ExperimentResult:
    out_dir = out_dir or config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    meta = config.provenance()

    store = prepare_store(config)
    store.meta = {**store.meta, **meta}
    D.save_manifest(store, os.path.join(out_dir, "store.jsonl"))

    state = self_train(config, store)
    try:
        s_tr = concordance(state)
        with stage("write"):
            write_history(state, os.path.join(out_dir, "history.jsonl"), meta)
            save_learner(state.n1, os.path.join(out_dir, "n1.json"), meta)
            save_learner(state.n2, os.path.join(out_dir, "n2.json"), meta)
    finally:
        close_learners(state.n1, state.n2)

    s1, s2 = list(state.s1.values()), list(state.s2.values())
    with stage("baseline-sets"):
        s3, s4 = D.build_baseline_sets(s1, oracle_for(store, config))
    sets = {D.SEED: store.pool(D.SEED), S1: s1, S2: s2, S3: s3, S4: s4, S_TR: s_tr}
    with stage("write"):
        for name in (S1, S2, S3, S4, S_TR):
            D.save_manifest(store.derive(name, sets[name], meta), os.path.join(out_dir, f"{name.lower()}.jsonl"))

    report = run_baselines(config, store, sets)
    write_baselines(report, os.path.join(out_dir, "baselines"))

    K = store.n_classes

    def cv(insts):
        return class_count_cv(class_counts(D.labels_of(insts), K)) if insts else None

    summary = {
        **meta,
        "status": state.status,
        "iterations": state.iteration,
        "sizes": {name: len(sets[name]) for name in (D.SEED, S1, S2, S3, S4, S_TR)},
        "class_count_cv_pct": {name: cv(sets[name]) for name in (S_TR, S3, S4)},
        "accuracy": {row.name: row.accuracy for row in report.rows},
        "label_error_rate_pct": {name: _pct(label_error_rate(sets[name])) for name in (S1, S2, S_TR)},
    }
    write_json(os.path.join(out_dir, "summary.json"), summary)
    return ExperimentResult(summary, state, sets, report)


# --------------------------------------------------------------------------
# helpers for the stand-alone subcommands
# --------------------------------------------------------------------------


def run_ssl_stage(config: PipelineConfig, out_dir: str | None = None) -> SslState:
    out_dir = out_dir or config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    meta = config.provenance()
    store = prepare_store(config)
    store.meta = {**store.meta, **meta}
    D.save_manifest(store, os.path.join(out_dir, "store.jsonl"))
    state = self_train(config, store)
    try:
        s_tr = concordance(state)
    finally:
        close_learners(state.n1, state.n2)
    with stage("write"):
        write_history(state, os.path.join(out_dir, "history.jsonl"), meta)
        save_learner(state.n1, os.path.join(out_dir, "n1.json"), meta)
        save_learner(state.n2, os.path.join(out_dir, "n2.json"), meta)
        for name, insts in ((S1, state.s1.values()), (S2, state.s2.values()), (S_TR, s_tr)):
            D.save_manifest(store.derive(name, insts, meta), os.path.join(out_dir, f"{name.lower()}.jsonl"))
    return state


def baselines_stage(config: PipelineConfig, out_dir: str, ssl_dir: str | None = None) -> BaselineReport:
    """Baselines from the manifests a previous ``run-ssl`` left in ``ssl_dir``."""
    ssl_dir = ssl_dir or config.output_dir
    with stage("baselines"):
        store = D.load_manifest(os.path.join(ssl_dir, "store.jsonl"))
        s1 = D.load_manifest(os.path.join(ssl_dir, "s1.jsonl")).pool(S1)
        s_tr = D.load_manifest(os.path.join(ssl_dir, "s_tr.jsonl")).pool(S_TR)
        s3, s4 = D.build_baseline_sets(s1, oracle_for(store, config))
    report = run_baselines(config, store, {D.SEED: store.pool(D.SEED), S3: s3, S4: s4, S_TR: s_tr})
    write_baselines(report, out_dir)
    return report
