"""Experiment configuration: one JSON document holding every knob.

The resolved configuration (defaults filled in, derived seeds made
explicit) is hashed and the hash is embedded in every artifact.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from importlib import resources

from .exceptions import ConfigError
from .learner import ExternalLearner, SoftmaxRegression
from .learner.optim import LearnerConfig
from .synth import SynthSpec


@dataclass
class LearnerSpec:
    """How to build one network: the built-in learner or an external command."""

    kind: str = "builtin"
    command: list[str] | str | None = None
    learning_rate: float = 0.001
    decay: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 40
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    jitter: float = 0.0
    warm_start: bool = False
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("builtin", "external"):
            raise ConfigError(f"learner kind must be 'builtin' or 'external', not {self.kind!r}")
        if self.kind == "external" and not self.command:
            raise ConfigError("an external learner needs a command")
        try:
            self.optimizer()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def optimizer(self) -> LearnerConfig:
        return LearnerConfig(
            learning_rate=self.learning_rate,
            decay=self.decay,
            beta1=self.beta1,
            beta2=self.beta2,
            batch_size=self.batch_size,
            epsilon=self.epsilon,
            weight_decay=self.weight_decay,
            seed=self.seed or 0,
        )

    def build(self, n_classes: int, epochs: int, warm_start: bool | None = None):
        warm = self.warm_start if warm_start is None else warm_start
        if self.kind == "external":
            cfg = asdict(self.optimizer())
            cfg.update(jitter=self.jitter, warm_start=warm)
            return ExternalLearner(self.command, n_classes=n_classes, epochs=epochs, config=cfg)
        model = SoftmaxRegression.from_config(self.optimizer(), n_classes=n_classes, epochs=epochs, jitter=self.jitter)
        return model.set_params(warm_start=warm)


@dataclass
class PartitionSpec:
    train: int = 1473
    val: int = 375
    test: int = 240
    strict: bool = False


@dataclass
class SelectionSpec:
    threshold: float = 0.99
    per_class_quota: int = 5


@dataclass
class PipelineConfig:
    seed: int = 0
    output_dir: str = "conlabel-out"
    # data source: a feature manifest, or a synthetic spec
    manifest: str | None = None
    synth: SynthSpec | None = None
    corruption: float = 0.1
    labels: str | None = None
    images_manifest: str | None = None
    dedup_threshold: int = 4
    partition: PartitionSpec = field(default_factory=PartitionSpec)
    selection: SelectionSpec = field(default_factory=SelectionSpec)
    base_epochs: int = 200
    target_size: int = 5000
    max_iterations: int | None = 200
    n_jobs: int = 1
    n1: LearnerSpec = field(default_factory=lambda: LearnerSpec(batch_size=40))
    n2: LearnerSpec = field(default_factory=lambda: LearnerSpec(batch_size=100))
    final: LearnerSpec | None = None

    def __post_init__(self):
        if self.manifest is None and self.synth is None:
            self.synth = SynthSpec(seed=self.seed)
        if self.n1.seed is None:
            self.n1.seed = self.seed
        if self.n2.seed is None:
            self.n2.seed = self.seed + 1
        if self.final is None:
            self.final = LearnerSpec(**{**asdict(self.n1), "warm_start": False})
        if self.final.seed is None:
            self.final.seed = self.seed
        self.validate()

    def validate(self) -> None:
        p = self.partition
        if min(p.train, p.val, p.test) < 1:
            raise ConfigError("partition counts must be positive")
        if self.target_size < p.train:
            raise ConfigError(
                f"target_size {self.target_size} is smaller than the seed set size {p.train}"
            )
        if self.base_epochs < 4:
            raise ConfigError("base_epochs must be >= 4")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if not 0 < self.selection.threshold <= 1:
            raise ConfigError("selection.threshold must lie in (0, 1]")
        if self.selection.per_class_quota < 1:
            raise ConfigError("selection.per_class_quota must be >= 1")
        if not 0 <= self.corruption <= 1:
            raise ConfigError("corruption must lie in [0, 1]")
        if not 0 <= self.dedup_threshold <= 64:
            raise ConfigError("dedup_threshold must lie in 0..64")
        paths = [x for x in (self.manifest, self.labels, self.images_manifest) if x]
        if self.output_dir in paths or len(set(paths)) != len(paths):
            raise ConfigError("configured paths must be distinct")

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def provenance(self) -> dict:
        return {"config_hash": self.config_hash(), "seed": self.seed}


def _build(cls, doc, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**doc)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(doc: dict) -> PipelineConfig:
    doc = dict(doc)
    nested = {
        "synth": SynthSpec,
        "partition": PartitionSpec,
        "selection": SelectionSpec,
        "n1": LearnerSpec,
        "n2": LearnerSpec,
        "final": LearnerSpec,
    }
    if isinstance(doc.get("synth"), dict) and "seed" not in doc["synth"]:
        doc["synth"] = {**doc["synth"], "seed": doc.get("seed", 0)}
    for key, cls in nested.items():
        if doc.get(key) is not None:
            doc[key] = _build(cls, doc[key], key)
    return _build(PipelineConfig, doc, "config")


def load_config(path: str | os.PathLike | None = None, base_dir: str | None = None) -> PipelineConfig:
    """Load a JSON config; ``None`` loads the bundled default.

    Relative paths inside the file are resolved against the file's directory.
    """
    if path is None:
        doc = json.loads(resources.files("conlabel").joinpath("default_config.json").read_text())
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        base_dir = base_dir or os.path.dirname(os.path.abspath(path))
    if base_dir:
        for key in ("manifest", "labels", "images_manifest"):
            if doc.get(key) and not os.path.isabs(doc[key]):
                doc[key] = os.path.join(base_dir, doc[key])
    return config_from_dict(doc)
