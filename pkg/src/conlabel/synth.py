"""Synthetic Gaussian-cluster datasets with known ground truth."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .data import (
    LABELED,
    SEED_PROVENANCE,
    UNATTRIBUTABLE,
    UNLABELED,
    ClassTaxonomy,
    DatasetStore,
    Instance,
)
from .exceptions import DimensionTooSmall


@dataclass
class SynthSpec:
    """Parameters of a synthetic dataset.

    Class ``c`` is a unit-variance isotropic Gaussian centred on
    ``separation * e_c`` (so neighbouring means lie ``separation * sqrt(2)``
    apart).  ``n_labeled`` and ``n_unlabeled`` are per-class
    counts.  ``label_noise`` is the fraction of the labeled pool whose
    assigned label is flipped to a uniformly chosen wrong class.
    """

    n_classes: int = 12
    dim: int = 16
    n_labeled: int = 175
    n_unlabeled: int = 500
    separation: float = 4.0
    label_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if self.separation < 0:
            raise ValueError("separation must be non-negative")
        if not 0 <= self.label_noise < 1:
            raise ValueError("label_noise must lie in [0, 1)")
        if self.n_labeled < 0 or self.n_unlabeled < 0:
            raise ValueError("instance counts must be non-negative")

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown synth spec fields: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


def class_means(spec: SynthSpec) -> np.ndarray:
    if spec.dim < spec.n_classes:
        raise DimensionTooSmall(f"dim {spec.dim} < {spec.n_classes} classes")
    means = np.zeros((spec.n_classes, spec.dim))
    means[np.arange(spec.n_classes), np.arange(spec.n_classes)] = spec.separation
    return means


def generate(spec: SynthSpec) -> DatasetStore:
    """Draw labeled (pool ``D_l``) and unlabeled (pool ``D_u``) instances.

    Every instance carries its true label; labeled instances are shuffled
    across classes so pool order carries no label information.
    """
    means = class_means(spec)
    rng = np.random.default_rng(spec.seed)
    K, d = spec.n_classes, spec.dim

    def draw(per_class):
        y = np.repeat(np.arange(K), per_class)
        X = means[y] + rng.standard_normal((len(y), d))
        order = rng.permutation(len(y))
        return X[order], y[order]

    X_l, y_l = draw(spec.n_labeled)
    X_u, y_u = draw(spec.n_unlabeled)

    assigned = y_l.copy()
    n_flip = int(round(spec.label_noise * len(y_l)))
    if n_flip:
        flip = rng.choice(len(y_l), size=n_flip, replace=False)
        shift = rng.integers(1, K, size=n_flip)
        assigned[flip] = (y_l[flip] + shift) % K

    store = DatasetStore(ClassTaxonomy.numbered(K), dim=d, meta={"synth": spec.to_dict()})
    width = len(str(max(len(y_l), len(y_u), 1)))
    for i, (x, t, a) in enumerate(zip(X_l, y_l, assigned)):
        store.add(Instance(f"l{i:0{width}d}", tuple(x.tolist()), int(t), int(a), SEED_PROVENANCE))
    for i, (x, t) in enumerate(zip(X_u, y_u)):
        store.add(Instance(f"u{i:0{width}d}", tuple(x.tolist()), int(t)))
    store.pools[LABELED] = [k for k in store.instances if k.startswith("l")]
    store.pools[UNLABELED] = [k for k in store.instances if k.startswith("u")]
    return store


def _empirical_geometry(store: DatasetStore) -> tuple[np.ndarray, float]:
    """Per-class feature means and pooled within-class std from true labels."""
    insts = [i for i in store.instances.values() if i.is_attributable]
    X = store.features(insts)
    y = np.array([i.true_label for i in insts])
    K = store.n_classes
    means = np.zeros((K, X.shape[1]))
    resid = []
    for k in range(K):
        members = X[y == k]
        if len(members):
            means[k] = members.mean(axis=0)
            resid.append(members - means[k])
    resid = np.concatenate(resid) if resid else np.zeros((0, X.shape[1]))
    scale = float(resid.std()) if resid.size else 1.0
    return means, scale


def corrupt_pool(store: DatasetStore, fraction: float, seed: int = 0, means=None, scale=None) -> DatasetStore:
    """Replace a fraction of ``D_u`` with boundary noise belonging to no class.

    Each replaced instance is drawn around the midpoint of two distinct
    random class means and gets ``true_label = UNATTRIBUTABLE``.  Class
    means and spread default to the recorded SynthSpec geometry for synthetic stores
    and to empirical estimates otherwise.  Returns a new store.
    """
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must lie in [0, 1]")
    out = DatasetStore(store.taxonomy, store.kind, store.dim, dict(store.instances),
                       {k: list(v) for k, v in store.pools.items()}, dict(store.meta))
    pool = out.pools.get(UNLABELED, [])
    n = int(round(fraction * len(pool)))
    if n == 0:
        return out
    if means is None:
        if "synth" in store.meta:
            spec = SynthSpec.from_dict(store.meta["synth"])
            means, scale = class_means(spec), 1.0 if scale is None else scale
        else:
            means, est = _empirical_geometry(store)
            scale = est if scale is None else scale
    scale = 1.0 if scale is None else scale
    rng = np.random.default_rng(seed)
    picked = sorted(rng.choice(len(pool), size=n, replace=False))
    K = len(means)
    for idx in picked:
        a, b = rng.choice(K, size=2, replace=False)
        x = 0.5 * (means[a] + means[b]) + scale * rng.standard_normal(means.shape[1])
        ident = pool[idx]
        out.instances[ident] = Instance(ident, tuple(x.tolist()), UNATTRIBUTABLE)
    out.meta["corruption"] = {"fraction": fraction, "seed": seed}
    return out
