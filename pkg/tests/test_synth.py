import numpy as np
import pytest

from conlabel import data as D
from conlabel.data import partition_store
from conlabel.exceptions import DimensionTooSmall
from conlabel.learner import SoftmaxRegression
from conlabel.ssl import SelectionRule, pseudo_labeled, run_ssl
from conlabel.synth import SynthSpec, class_means, corrupt_pool, generate


def split_xy(store, pool):
    insts = store.pool(pool)
    return store.features(insts), np.array([i.true_label for i in insts])


def test_means_on_orthogonal_axes():
    means = class_means(SynthSpec(n_classes=3, dim=5, separation=2.5))
    np.testing.assert_array_equal(means, 2.5 * np.eye(3, 5))
    with pytest.raises(DimensionTooSmall):
        class_means(SynthSpec(n_classes=6, dim=5))


@pytest.mark.parametrize("bad", [{"n_classes": 1}, {"separation": -1.0}, {"label_noise": 1.0}, {"n_labeled": -1}])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        SynthSpec(**bad)


def test_spec_from_dict_rejects_unknown_fields():
    assert SynthSpec.from_dict({"seed": 4}).seed == 4
    with pytest.raises(ValueError):
        SynthSpec.from_dict({"sepration": 4})


def test_generated_store_shape():
    spec = SynthSpec(n_classes=3, dim=4, n_labeled=5, n_unlabeled=7, seed=2)
    store = generate(spec)
    assert len(store.pools[D.LABELED]) == 15 and len(store.pools[D.UNLABELED]) == 21
    assert all(i.true_label is not None for i in store.instances.values())
    assert all(i.provenance == D.SEED_PROVENANCE for i in store.pool(D.LABELED))
    assert all(i.assigned_label is None for i in store.pool(D.UNLABELED))
    assert store.meta["synth"] == spec.to_dict()
    # round-trips through a manifest
    assert D.loads_manifest(D.dumps_manifest(store)).instances == store.instances


def test_determinism_and_seed_sensitivity():
    a = generate(SynthSpec(n_classes=3, dim=3, n_labeled=4, n_unlabeled=4, seed=1))
    b = generate(SynthSpec(n_classes=3, dim=3, n_labeled=4, n_unlabeled=4, seed=1))
    c = generate(SynthSpec(n_classes=3, dim=3, n_labeled=4, n_unlabeled=4, seed=2))
    assert D.dumps_manifest(a) == D.dumps_manifest(b)
    assert D.dumps_manifest(a) != D.dumps_manifest(c)


def test_zero_separation_is_chance():
    K = 4
    store = generate(SynthSpec(n_classes=K, dim=4, n_labeled=100, n_unlabeled=250, separation=0.0, seed=0))
    X, y = split_xy(store, D.LABELED)
    Xt, yt = split_xy(store, D.UNLABELED)
    acc = SoftmaxRegression(n_classes=K, epochs=50).fit(X, y).score(Xt, yt)
    # 1000 test points: 1/K plus or minus about 4 standard errors
    assert abs(acc - 1 / K) < 4 * np.sqrt(0.25 * 0.75 / len(yt))


def test_wide_separation_is_learnable():
    spec = SynthSpec(n_classes=4, dim=8, n_labeled=60, n_unlabeled=100, separation=8.0, seed=1)
    store = generate(spec)
    Xt, yt = split_xy(store, D.UNLABELED)
    # nearest-mean oracle with the true means confirms the classes separate
    means = class_means(spec)
    nearest = np.argmin(((Xt[:, None, :] - means[None]) ** 2).sum(axis=2), axis=1)
    assert np.mean(nearest == yt) >= 0.99
    X, y = split_xy(store, D.LABELED)
    model = SoftmaxRegression(n_classes=4, epochs=200, learning_rate=0.01).fit(X, y)
    assert model.score(Xt, yt) >= 0.99


def test_label_noise_fraction():
    store = generate(SynthSpec(n_classes=4, dim=4, n_labeled=2500, n_unlabeled=0, label_noise=0.1, seed=5))
    labeled = store.pool(D.LABELED)
    assert len(labeled) == 10_000
    flipped = np.mean([i.assigned_label != i.true_label for i in labeled])
    assert abs(flipped - 0.1) <= 0.01


def test_corruption_extremes():
    store = generate(SynthSpec(n_classes=3, dim=3, n_labeled=4, n_unlabeled=10, seed=0))
    same = corrupt_pool(store, 0.0, seed=1)
    assert same.instances == store.instances
    everything = corrupt_pool(store, 1.0, seed=1)
    assert all(i.true_label == D.UNATTRIBUTABLE for i in everything.pool(D.UNLABELED))
    assert everything.pool(D.LABELED) == store.pool(D.LABELED)
    # the input store is left untouched
    assert all(i.true_label != D.UNATTRIBUTABLE for i in store.instances.values())


def test_corrupted_points_sit_between_two_means():
    spec = SynthSpec(n_classes=3, dim=3, n_labeled=2, n_unlabeled=200, separation=6.0, seed=0)
    store = corrupt_pool(generate(spec), 1.0, seed=2, scale=0.0)
    X = store.features(store.pool(D.UNLABELED))
    for x in X:
        assert sorted(np.round(x, 9).tolist()) == [0.0, 3.0, 3.0]


def test_confidence_threshold_avoids_boundary_noise():
    fractions = []
    for seed in range(5):
        spec = SynthSpec(n_classes=4, dim=8, n_labeled=100, n_unlabeled=100, separation=4.0, seed=seed)
        store = partition_store(corrupt_pool(generate(spec), 0.2, seed=seed), (200, 100, 40), seed=seed)
        kw = dict(n_classes=4, learning_rate=0.2, warm_start=True)
        n1 = SoftmaxRegression(batch_size=40, random_state=seed, **kw)
        n2 = SoftmaxRegression(batch_size=100, random_state=seed + 1, **kw)
        state = run_ssl(store, n1, n2, SelectionRule(0.99, 5, seed=seed), base_epochs=100, target_size=320)
        picked = pseudo_labeled(list(state.s1.values()) + list(state.s2.values()))
        assert picked
        fractions.append(np.mean([i.true_label == D.UNATTRIBUTABLE for i in picked]))
    assert max(fractions) < 0.2
