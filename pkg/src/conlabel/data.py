"""Dataset store, JSONL manifests, balanced partitioning and baseline sets.

A manifest is line-delimited JSON: one header line carrying the class
taxonomy, payload kind, feature dimension, pool membership and free-form
metadata, followed by one line per instance.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import (
    DimensionMismatch,
    DuplicateId,
    InsufficientClassMembers,
    ManifestParseError,
    MissingOracleLabel,
    UnbalancedRequest,
)

MANIFEST_FORMAT = "conlabel-manifest"
MANIFEST_VERSION = 1

# true_label of samples that belong to no class (boundary noise)
UNATTRIBUTABLE = -1

SEED_LABELED = "seed-labeled"
PSEUDO_LABELED = "pseudo-labeled"
ORACLE_CORRECTED = "oracle-corrected"
PROVENANCE_KINDS = (SEED_LABELED, PSEUDO_LABELED, ORACLE_CORRECTED)

FEATURES = "features"
IMAGES = "images"

# pools with fixed meaning; evaluation pools never feed training
LABELED, UNLABELED = "D_l", "D_u"
SEED, VALIDATION, TEST = "S_i", "V1", "T1"
EVALUATION_POOLS = (VALIDATION, TEST)


@dataclass(frozen=True)
class Provenance:
    kind: str
    iteration: int | None = None
    network: int | None = None
    confidence: float | None = None

    def __post_init__(self):
        if self.kind not in PROVENANCE_KINDS:
            raise ValueError(f"unknown provenance kind {self.kind!r}")
        if self.kind == PSEUDO_LABELED:
            if self.iteration is None or self.iteration < 1:
                raise ValueError("pseudo-labels need iteration >= 1")
            if self.confidence is None or not 0.0 <= self.confidence <= 1.0:
                raise ValueError("pseudo-label confidence must lie in [0, 1]")

    def to_dict(self) -> dict:
        doc = {"kind": self.kind}
        if self.kind == PSEUDO_LABELED:
            doc.update(iteration=self.iteration, network=self.network, confidence=self.confidence)
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Provenance":
        return cls(
            kind=doc["kind"],
            iteration=doc.get("iteration"),
            network=doc.get("network"),
            confidence=doc.get("confidence"),
        )

    @classmethod
    def pseudo(cls, iteration: int, network: int, confidence: float) -> "Provenance":
        return cls(PSEUDO_LABELED, iteration, network, float(confidence))


SEED_PROVENANCE = Provenance(SEED_LABELED)
ORACLE_PROVENANCE = Provenance(ORACLE_CORRECTED)


@dataclass(frozen=True)
class Instance:
    """One sample.  ``payload`` is a feature tuple or an image path."""

    id: str
    payload: tuple[float, ...] | str
    true_label: int | None = None
    assigned_label: int | None = None
    provenance: Provenance | None = None

    @property
    def is_attributable(self) -> bool:
        return self.true_label is not None and self.true_label != UNATTRIBUTABLE

    def relabel(self, label: int, provenance: Provenance | None = None) -> "Instance":
        return replace(self, assigned_label=int(label), provenance=provenance or self.provenance)

    def to_dict(self) -> dict:
        doc: dict = {"id": self.id}
        if isinstance(self.payload, str):
            doc["image"] = self.payload
        else:
            doc["features"] = list(self.payload)
        doc["true_label"] = self.true_label
        doc["assigned_label"] = self.assigned_label
        doc["provenance"] = None if self.provenance is None else self.provenance.to_dict()
        return doc


@dataclass(frozen=True)
class ClassTaxonomy:
    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) < 2:
            raise ValueError("a taxonomy needs at least two classes")
        if len(set(self.names)) != len(self.names):
            raise ValueError("class names must be unique")

    def __len__(self):
        return len(self.names)

    @classmethod
    def numbered(cls, n_classes: int) -> "ClassTaxonomy":
        return cls(tuple(f"class_{k}" for k in range(n_classes)))


@dataclass
class DatasetStore:
    taxonomy: ClassTaxonomy
    kind: str = FEATURES
    dim: int | None = None
    instances: dict[str, Instance] = field(default_factory=dict)
    pools: dict[str, list[str]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return len(self.taxonomy)

    def __len__(self):
        return len(self.instances)

    def __contains__(self, ident):
        return ident in self.instances

    def __getitem__(self, ident) -> Instance:
        return self.instances[ident]

    def add(self, inst: Instance, overwrite: bool = False) -> None:
        if inst.id in self.instances and not overwrite:
            raise DuplicateId(f"duplicate id {inst.id!r}")
        if isinstance(inst.payload, str):
            if self.kind != IMAGES:
                raise DimensionMismatch(f"{inst.id}: image payload in a feature store")
        else:
            if self.kind != FEATURES:
                raise DimensionMismatch(f"{inst.id}: feature payload in an image store")
            if self.dim is None:
                self.dim = len(inst.payload)
            elif len(inst.payload) != self.dim:
                raise DimensionMismatch(
                    f"instance {inst.id!r} has dimension {len(inst.payload)}, expected {self.dim}"
                )
        for label in (inst.true_label, inst.assigned_label):
            if label is not None and label != UNATTRIBUTABLE and not 0 <= label < self.n_classes:
                raise ValueError(f"{inst.id}: label {label} outside 0..{self.n_classes - 1}")
        self.instances[inst.id] = inst

    def extend(self, instances: Iterable[Instance]) -> None:
        for inst in instances:
            self.add(inst)

    def set_pool(self, name: str, ids: Iterable[str]) -> None:
        ids = list(ids)
        missing = [i for i in ids if i not in self.instances]
        if missing:
            raise KeyError(f"pool {name!r} references unknown ids {missing[:5]}")
        if len(set(ids)) != len(ids):
            raise DuplicateId(f"pool {name!r} lists an id twice")
        if name == TEST and TEST in self.pools and self.pools[TEST] != ids:
            raise ValueError("the test pool is frozen once partitioned")
        self.pools[name] = ids

    def pool(self, name: str) -> list[Instance]:
        return [self.instances[i] for i in self.pools.get(name, [])]

    def features(self, instances: Sequence[Instance]) -> np.ndarray:
        if self.kind != FEATURES:
            raise TypeError("store holds image payloads, not features")
        if not instances:
            return np.zeros((0, self.dim or 0))
        return np.asarray([inst.payload for inst in instances], dtype=np.float64)

    def derive(self, pool_name: str, instances: Iterable[Instance], meta: dict | None = None) -> "DatasetStore":
        """New store with the same taxonomy holding ``instances`` as one pool."""
        out = DatasetStore(self.taxonomy, self.kind, self.dim, meta=dict(meta or self.meta))
        out.extend(instances)
        out.pools[pool_name] = list(out.instances)
        return out

    def check(self) -> None:
        """Raise if pools reference unknown ids or evaluation pools leak."""
        for name, ids in self.pools.items():
            missing = [i for i in ids if i not in self.instances]
            if missing:
                raise KeyError(f"pool {name!r} references unknown ids {missing[:5]}")
        held_out = set(self.pools.get(VALIDATION, ())) | set(self.pools.get(TEST, ()))
        if set(self.pools.get(VALIDATION, ())) & set(self.pools.get(TEST, ())):
            raise ValueError("validation and test pools overlap")
        for name, ids in self.pools.items():
            if name in EVALUATION_POOLS:
                continue
            if name not in (LABELED,) and held_out & set(ids):
                raise ValueError(f"pool {name!r} leaks evaluation instances")


def labels_of(instances: Sequence[Instance]) -> np.ndarray:
    return np.asarray([inst.assigned_label for inst in instances], dtype=np.int64)


# --------------------------------------------------------------------------
# manifest I/O
# --------------------------------------------------------------------------


def dumps_manifest(store: DatasetStore) -> str:
    header = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "taxonomy": list(store.taxonomy.names),
        "payload": store.kind,
        "dim": store.dim,
        "pools": {name: list(ids) for name, ids in store.pools.items()},
        "meta": store.meta,
    }
    lines = [json.dumps(header, sort_keys=False)]
    lines.extend(json.dumps(inst.to_dict()) for inst in store.instances.values())
    return "\n".join(lines) + "\n"


def save_manifest(store: DatasetStore, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_manifest(store))


def _parse_instance(doc: dict, lineno: int) -> Instance:
    try:
        ident = doc["id"]
        if "features" in doc:
            payload = tuple(float(v) for v in doc["features"])
        elif "image" in doc:
            payload = str(doc["image"])
        else:
            raise ManifestParseError(lineno, "instance has neither features nor image")
        prov = doc.get("provenance")
        return Instance(
            id=str(ident),
            payload=payload,
            true_label=doc.get("true_label"),
            assigned_label=doc.get("assigned_label"),
            provenance=None if prov is None else Provenance.from_dict(prov),
        )
    except ManifestParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestParseError(lineno, f"bad instance record: {exc}") from exc


def loads_manifest(text: str) -> DatasetStore:
    lines = text.splitlines()
    if not lines:
        raise ManifestParseError(1, "empty manifest (missing header)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ManifestParseError(1, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(header, dict) or header.get("format") != MANIFEST_FORMAT:
        raise ManifestParseError(1, "missing manifest header")
    try:
        store = DatasetStore(
            taxonomy=ClassTaxonomy(tuple(header["taxonomy"])),
            kind=header.get("payload", FEATURES),
            dim=header.get("dim"),
            meta=header.get("meta") or {},
        )
    except (KeyError, ValueError) as exc:
        raise ManifestParseError(1, f"bad header: {exc}") from exc
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestParseError(lineno, f"invalid JSON: {exc.msg}") from exc
        inst = _parse_instance(doc, lineno)
        try:
            store.add(inst)
        except DimensionMismatch:
            raise
        except ValueError as exc:
            raise ManifestParseError(lineno, str(exc)) from exc
    for name, ids in (header.get("pools") or {}).items():
        try:
            store.set_pool(name, ids)
        except (KeyError, ValueError) as exc:
            raise ManifestParseError(1, str(exc)) from exc
    return store


def load_manifest(path: str | os.PathLike) -> DatasetStore:
    with open(path, encoding="utf-8") as fh:
        return loads_manifest(fh.read())


def load_oracle_labels(path: str | os.PathLike) -> dict[str, int]:
    """Read a two-column ``id,label`` CSV.  A header row is skipped."""
    labels: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise ManifestParseError(lineno, "expected two columns: id,label")
            ident, label = row[0].strip(), row[1].strip()
            try:
                labels[ident] = int(label)
            except ValueError:
                if lineno == 1:
                    continue
                raise ManifestParseError(lineno, f"label {label!r} is not an integer") from None
    return labels


def truth_oracle(instances: Iterable[Instance]) -> dict[str, int]:
    """Oracle built from generator ground truth (synthetic mode)."""
    return {inst.id: inst.true_label for inst in instances if inst.true_label is not None}


# --------------------------------------------------------------------------
# partitioning and baseline sets
# --------------------------------------------------------------------------


def _per_class_counts(total: int, n_classes: int, strict: bool) -> list[int]:
    if strict:
        if total % n_classes:
            raise UnbalancedRequest(
                f"count {total} is not divisible by {n_classes} classes (use non-strict mode)"
            )
        return [total // n_classes] * n_classes
    base, rem = divmod(total, n_classes)
    return [base + (1 if k < rem else 0) for k in range(n_classes)]


def partition_balanced(
    labeled: Sequence[Instance],
    counts: tuple[int, int, int],
    n_classes: int,
    seed: int = 0,
    strict: bool = True,
) -> tuple[list[Instance], list[Instance], list[Instance]]:
    """Split labeled instances into class-balanced train/validation/test sets.

    In strict mode every count must be divisible by ``n_classes``.  Otherwise
    each class gets ``count // n_classes`` and the remainder is handed out one
    per class in class-index order.
    """
    per_split = [_per_class_counts(int(c), n_classes, strict) for c in counts]
    by_class: dict[int, list[Instance]] = {k: [] for k in range(n_classes)}
    for inst in labeled:
        by_class[inst.assigned_label].append(inst)
    rng = np.random.default_rng(seed)
    splits: list[list[Instance]] = [[], [], []]
    for k in range(n_classes):
        members = sorted(by_class[k], key=lambda inst: inst.id)
        needed = sum(split[k] for split in per_split)
        if len(members) < needed:
            raise InsufficientClassMembers(k, needed, len(members))
        order = rng.permutation(len(members))
        start = 0
        for out, split in zip(splits, per_split):
            out.extend(members[i] for i in order[start : start + split[k]])
            start += split[k]
    return splits[0], splits[1], splits[2]


def partition_store(
    store: DatasetStore,
    counts: tuple[int, int, int],
    seed: int = 0,
    strict: bool = True,
    source: str = LABELED,
) -> DatasetStore:
    train, val, test = partition_balanced(store.pool(source), counts, store.n_classes, seed, strict)
    store.set_pool(SEED, [i.id for i in train])
    store.set_pool(VALIDATION, [i.id for i in val])
    store.set_pool(TEST, [i.id for i in test])
    return store


def build_baseline_sets(
    s1: Sequence[Instance], oracle: Mapping[str, int]
) -> tuple[list[Instance], list[Instance]]:
    """Return (S3, S4): S1 filtered to correct labels, and S1 with errors corrected.

    Instances the oracle marks unattributable have no valid class; they are
    dropped from both sets.
    """
    s3, s4 = [], []
    for inst in s1:
        if inst.id not in oracle:
            raise MissingOracleLabel(inst.id)
        truth = oracle[inst.id]
        if truth is None or truth == UNATTRIBUTABLE:
            continue
        if inst.assigned_label == truth:
            s3.append(inst)
            s4.append(inst)
        else:
            s4.append(inst.relabel(truth, ORACLE_PROVENANCE))
    return s3, s4
