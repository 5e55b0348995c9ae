import math

import numpy as np
import pytest

from acadrisk import (DomainError, MalformedTreeError, SingleClassError, SynthSpec, TrainConfig,
                      Tree, TreeEnsemble, auc, classification_metrics, generate, stratified_split,
                      train_gbdt, train_logistic)
from acadrisk.trees import (bin_thresholds, leaf_weight, load_model, predict_proba, sample_weights,
                            save_model, split_gain, weighted_log_loss)

from conftest import random_ensemble


def xor_data(seed, n=200):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 2))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
    return X, y


def fixtures():
    """Datasets used for the per-fixture invariants."""
    rng = np.random.default_rng(11)
    x = np.r_[rng.uniform(-2, -0.1, 30), rng.uniform(0.1, 2, 30)]
    yield "separable", x[:, None], (x > 0).astype(int)
    yield "xor", *xor_data(0)
    noise = rng.normal(size=(150, 5))
    yield "noise", noise, rng.integers(0, 2, 150)
    cat = rng.integers(0, 4, size=(120, 3)).astype(float)
    yield "categorical", cat, (cat[:, 0] + rng.normal(scale=0.8, size=120) > 1.5).astype(int)
    cohort, _, _ = generate(SynthSpec(n_students=96, seed=0))
    yield "cohort", cohort.X, cohort.y


FIXTURES = list(fixtures())
SMALL = TrainConfig(num_trees=40)


# --- formulas --------------------------------------------------------------

def test_leaf_weight_examples():
    assert leaf_weight(0.0, 3.0, 1.0) == 0.0
    # four positives at p = 0.5: g = -0.5 and h = 0.25 each
    assert leaf_weight(4 * -0.5, 4 * 0.25, 1.0) == 1.0
    assert leaf_weight(3.0, 2.0, 0.0) == -1.5
    with pytest.raises(DomainError):
        leaf_weight(1.0, 0.0, 0.0)


def test_split_gain_examples():
    assert split_gain(-2.0, 1.0, 2.0, 1.0, 0.0) == 4.0
    g, h = 0.3, 0.2
    for k in range(1, 10):
        assert abs(split_gain(k * g, k * h, (10 - k) * g, (10 - k) * h, 0.0)) <= 1e-12
    with pytest.raises(DomainError):
        split_gain(1.0, 1.0, 0.0, 0.0, 0.0)


def test_thresholds_are_midpoints_within_the_bin_budget():
    col = np.array([3.0, 1.0, 2.0, 2.0, 5.0])
    assert bin_thresholds(col, 64).tolist() == [1.5, 2.5, 4.0]
    assert bin_thresholds(np.ones(5), 64).size == 0
    many = np.random.default_rng(0).normal(size=1000)
    assert len(bin_thresholds(many, 16)) <= 15


# --- training --------------------------------------------------------------

def test_separable_data_is_fit_perfectly():
    x = np.linspace(-1, 1, 40)
    x = x[x != 0]
    y = (x > 0).astype(int)
    model = train_gbdt(x[:, None], y, TrainConfig(num_trees=10, min_samples_leaf=1))
    assert np.array_equal(model.predict(x[:, None]), y)


@pytest.mark.parametrize("seed", range(10))
def test_xor_needs_trees(seed):
    X, y = xor_data(seed)
    gbdt = train_gbdt(X, y)
    assert auc(gbdt.predict_proba(X), y) > 0.95
    logit = train_logistic(X, y)
    assert 0.4 <= auc(logit.predict_proba(X), y) <= 0.6


@pytest.mark.parametrize("name,X,y", FIXTURES, ids=[f[0] for f in FIXTURES])
def test_training_loss_never_increases(name, X, y):
    model = train_gbdt(X, y, SMALL)
    w = sample_weights(y, model.config["pos_weight_used"])
    losses = [weighted_log_loss(raw, y, w) for raw in model.staged_raw_score(X)]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:])), name


@pytest.mark.parametrize("name,X,y", FIXTURES, ids=[f[0] for f in FIXTURES])
def test_covers_add_up_and_respect_min_leaf(name, X, y):
    config = TrainConfig(num_trees=20, min_samples_leaf=5)
    for tree in train_gbdt(X, y, config).trees:
        assert tree.cover[0] == len(y)
        for node in range(tree.n_nodes):
            if tree.is_leaf(node):
                assert tree.cover[node] >= config.min_samples_leaf
            else:
                assert tree.cover[node] == tree.cover[tree.left[node]] + tree.cover[tree.right[node]]


@pytest.mark.parametrize("name,X,y", FIXTURES, ids=[f[0] for f in FIXTURES])
def test_retraining_and_row_shuffles_give_identical_models(name, X, y):
    a = train_gbdt(X, y, SMALL).to_json()
    assert train_gbdt(X, y, SMALL).to_json() == a
    perm = np.random.default_rng(1).permutation(len(y))
    assert train_gbdt(X[perm], y[perm], SMALL).to_json() == a


def test_base_score_is_weighted_log_odds():
    X, y = xor_data(0)
    y = y.copy()
    y[:150] = 0
    n_pos = int(y.sum())
    model = train_gbdt(X, y, TrainConfig(num_trees=1, pos_weight=2.0))
    assert model.base_score == pytest.approx(math.log(2.0 * n_pos / (len(y) - n_pos)), abs=1e-15)
    auto = train_gbdt(X, y, TrainConfig(num_trees=1))
    assert auto.base_score == pytest.approx(0.0, abs=1e-15)


def test_prediction_is_base_plus_scaled_leaves():
    X, y = xor_data(1)
    model = train_gbdt(X, y, SMALL)
    leaves = sum(t.predict(X) for t in model.trees)
    assert np.array_equal(model.raw_score(X), model.base_score + model.learning_rate * leaves)
    batch = model.predict_proba(X)
    assert np.array_equal(batch, [predict_proba(model, x) for x in X])


def test_positive_weight_raises_recall_on_an_imbalanced_cohort():
    cohort, _, _ = generate(SynthSpec(n_students=367, seed=0))
    train, test = stratified_split(cohort, 0.25, 0)

    def recall(pos_weight):
        model = train_gbdt(train.X, train.y, TrainConfig(pos_weight=pos_weight))
        return classification_metrics(model.predict_proba(test.X), test.y).recall

    assert recall(845 / 155) > recall(1.0)
    assert recall(None) > recall(1.0)


def test_training_errors():
    X = np.zeros((10, 2))
    with pytest.raises(SingleClassError):
        train_gbdt(X, np.zeros(10))
    with pytest.raises(DomainError):
        train_gbdt(X[:1], [1])
    with pytest.raises(DomainError):
        train_gbdt(X[:4], [0, 1, 0, 1], TrainConfig(min_samples_leaf=5))
    with pytest.raises(DomainError):
        train_gbdt(np.full((4, 2), np.nan), [0, 1, 0, 1])


@pytest.mark.parametrize("field,value", [
    ("num_trees", 0), ("max_leaves", 1), ("lambda_", -1.0), ("learning_rate", 0.0),
    ("learning_rate", 1.5), ("histogram_bins", 1), ("histogram_bins", 257), ("pos_weight", 0.0),
])
def test_config_bounds(field, value):
    with pytest.raises(DomainError):
        TrainConfig(**{field: value})


def test_config_round_trip():
    cfg = TrainConfig(num_trees=3, lambda_=0.5, pos_weight=2.0)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.to_dict()["lambda"] == 0.5
    with pytest.raises(DomainError):
        TrainConfig.from_dict({"depth": 3})


# --- prediction and serialisation -------------------------------------------

def test_empty_ensemble_predicts_one_half():
    model = TreeEnsemble([], 0.0, 0.1, 3)
    assert predict_proba(model, np.zeros(3)) == 0.5


def test_single_stump_routes_to_its_leaf():
    model = TreeEnsemble([Tree.stump(0, 0.5, -1.0, 2.0, 3, 4)], 0.0, 1.0, 2)
    assert predict_proba(model, np.array([0.9, 0.0])) == pytest.approx(1 / (1 + math.exp(-2.0)))
    assert predict_proba(model, np.array([0.5, 0.0])) == pytest.approx(1 / (1 + math.exp(1.0)))


def test_dimension_mismatch_is_rejected():
    model = TreeEnsemble([], 0.0, 0.1, 3)
    with pytest.raises(DomainError):
        model.predict_proba(np.zeros((2, 4)))


def test_malformed_trees_are_rejected():
    bad_cover = Tree([1, -1, -1], [2, -1, -1], [0, -1, -1], [0.0] * 3, [0.0] * 3, [5.0, 2.0, 2.0])
    with pytest.raises(MalformedTreeError):
        bad_cover.validate()
    with pytest.raises(MalformedTreeError):
        TreeEnsemble([bad_cover], 0.0, 1.0, 1)
    with pytest.raises(MalformedTreeError):
        Tree([0], [0], [0], [0.0], [0.0], [1.0])
    with pytest.raises(MalformedTreeError):
        TreeEnsemble([Tree.stump(0, 0.0, 1.0, 2.0, 0, 0)], 0.0, 1.0, 1)


def test_model_json_round_trip(tmp_path):
    X, y = xor_data(2)
    model = train_gbdt(X, y, SMALL, ["a", "b"])
    save_model(model, tmp_path / "m.json")
    again = load_model(tmp_path / "m.json")
    assert again == model
    assert np.array_equal(again.raw_score(X), model.raw_score(X))


def test_nested_tree_json_has_the_documented_fields():
    rng = np.random.default_rng(0)
    tree = random_ensemble(rng, 4, n_trees=1).trees[0]
    d = tree.to_dict()

    def check(node):
        if "left" in node:
            assert {"feature", "threshold", "cover", "left", "right"} <= set(node)
            check(node["left"])
            check(node["right"])
        else:
            assert {"value", "cover"} <= set(node)

    check(d)
    assert Tree.from_dict(d) == tree
