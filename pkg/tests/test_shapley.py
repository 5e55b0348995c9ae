import io
import itertools
import math

import numpy as np
import pytest

from acadrisk import (DomainError, MalformedTreeError, TrainConfig, Tree, TreeEnsemble, exact_shapley,
                      explain_rows, global_importance, sampled_shapley, train_gbdt, tree_shap)
from acadrisk.shapley import (Explanation, expected_value, load_explanations, save_explanations,
                              tree_conditional_expectation)

from conftest import random_ensemble, random_tree


def coalition_value(ensemble, x, S):
    """Path-dependent value of coalition ``S``, written out independently of the library."""
    total = 0.0
    for t in ensemble.trees:
        def walk(node):
            if t.left[node] < 0:
                return t.value[node]
            lo, hi = t.left[node], t.right[node]
            if t.feature[node] in S:
                return walk(lo if x[t.feature[node]] <= t.threshold[node] else hi)
            return (t.cover[lo] * walk(lo) + t.cover[hi] * walk(hi)) / t.cover[node]
        total += walk(0)
    return ensemble.base_score + ensemble.learning_rate * total


def permutation_shapley(ensemble, x):
    """Average marginal contribution over every ordering of the used features."""
    used = sorted(ensemble.used_features())
    phi = np.zeros(ensemble.feature_count)
    orders = list(itertools.permutations(used))
    for order in orders:
        S = set()
        before = coalition_value(ensemble, x, S)
        for f in order:
            S.add(f)
            after = coalition_value(ensemble, x, S)
            phi[f] += after - before
            before = after
    return phi / len(orders)


def depth_two_tree():
    #        f0 <= 0
    #     f1 <= 0     f1 <= 0.5
    #   1 (30) 2 (10) 3 (20) 5 (40)
    return Tree(left=[1, 3, 5, -1, -1, -1, -1], right=[2, 4, 6, -1, -1, -1, -1],
                feature=[0, 1, 1, -1, -1, -1, -1], threshold=[0.0, 0.0, 0.5, 0, 0, 0, 0],
                value=[0, 0, 0, 1.0, 2.0, 3.0, 5.0], cover=[100, 40, 60, 30, 10, 20, 40])


def random_case(seed, n_features=None, used=None):
    rng = np.random.default_rng(seed)
    M = int(rng.integers(1, 13)) if n_features is None else n_features
    if used is None:
        used = sorted(rng.choice(M, size=int(rng.integers(1, M + 1)), replace=False).tolist())
    ens = random_ensemble(rng, M, used=used)
    return ens, rng.normal(size=M), rng


# --- value function --------------------------------------------------------

def test_conditional_expectation_examples():
    tree = depth_two_tree()
    x = np.array([1.0, 0.0])
    assert tree_conditional_expectation(tree, x, {0, 1}) == 3.0
    assert tree_conditional_expectation(tree, x, {0}) == pytest.approx((20 * 3 + 40 * 5) / 60)
    assert tree_conditional_expectation(tree, x, set()) == pytest.approx(
        (30 * 1 + 10 * 2 + 20 * 3 + 40 * 5) / 100)
    stump = Tree.stump(0, 0.0, -1.0, 4.0, 3, 1)
    assert tree_conditional_expectation(stump, [0.0], set()) == (3 * -1.0 + 1 * 4.0) / 4


def test_zero_cover_is_malformed():
    tree = Tree([1, -1, -1], [2, -1, -1], [0, -1, -1], [0.0] * 3, [0, 1.0, 2.0], [0.0, 0.0, 0.0])
    with pytest.raises(MalformedTreeError):
        tree_conditional_expectation(tree, [0.0], set())
    with pytest.raises(MalformedTreeError):
        TreeEnsemble([tree], 0.0, 1.0, 1)


# --- exact enumeration -----------------------------------------------------

def test_single_split_attributes_everything_to_its_feature():
    ens = TreeEnsemble([Tree.stump(1, 0.0, -1.0, 4.0, 3, 1)], 0.0, 1.0, 3)
    e = exact_shapley(ens, np.array([9.0, 1.0, -9.0]))
    assert e.phi.tolist() == [0.0, pytest.approx(4.0 - 0.25), 0.0]
    assert e.base_value == pytest.approx(0.25)


def test_symmetric_and_tree_gives_equal_credit():
    # value 1 only when both features exceed 0.5; equal covers everywhere
    tree = Tree(left=[1, 3, 5, -1, -1, -1, -1], right=[2, 4, 6, -1, -1, -1, -1],
                feature=[0, 1, 1, -1, -1, -1, -1], threshold=[0.5] * 3 + [0] * 4,
                value=[0, 0, 0, 0.0, 0.0, 0.0, 1.0], cover=[4, 2, 2, 1, 1, 1, 1])
    e = exact_shapley(TreeEnsemble([tree], 0.0, 1.0, 2), np.array([1.0, 1.0]))
    assert e.phi[0] == pytest.approx(e.phi[1], abs=1e-12)
    assert e.phi.sum() == pytest.approx(0.75)


@pytest.mark.parametrize("seed", range(10))
def test_exact_matches_all_orderings(seed):
    rng = np.random.default_rng(seed)
    ens = random_ensemble(rng, 3, n_trees=5)
    x = rng.normal(size=3)
    assert np.allclose(exact_shapley(ens, x).phi, permutation_shapley(ens, x), rtol=0, atol=1e-12)


def test_exact_guard_points_to_tree_shap():
    rng = np.random.default_rng(0)
    trees = [Tree.stump(f, 0.0, 0.0, 1.0, 1, 1) for f in range(21)]
    ens = TreeEnsemble(trees, 0.0, 1.0, 21)
    with pytest.raises(DomainError, match="tree_shap"):
        exact_shapley(ens, rng.normal(size=21))


# --- tree_shap against the oracle, and the four axioms ----------------------

def test_tree_shap_equals_exact_on_random_ensembles():
    worst = 0.0
    for seed in range(100):
        ens, x, _ = random_case(seed)
        fast, slow = tree_shap(ens, x), exact_shapley(ens, x)
        worst = max(worst, float(np.max(np.abs(fast.phi - slow.phi))))
        assert fast.base_value == pytest.approx(slow.base_value, abs=1e-9)
        assert fast.output == pytest.approx(slow.output, abs=1e-9)
    assert worst < 1e-9


def test_efficiency():
    for seed in range(100):
        ens, x, _ = random_case(seed)
        for e in (tree_shap(ens, x), exact_shapley(ens, x)):
            assert abs(e.residual) < 1e-9
            assert e.output == pytest.approx(ens.raw_score(x[None, :])[0], abs=1e-12)


def test_dummy():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        M = int(rng.integers(2, 13))
        used = sorted(rng.choice(M, size=int(rng.integers(1, M)), replace=False).tolist())
        ens, x, _ = random_case(seed, M, used)
        for e in (tree_shap(ens, x), exact_shapley(ens, x)):
            unused = [f for f in range(M) if f not in used]
            assert all(e.phi[f] == 0.0 for f in unused)


def swapped(tree, a, b):
    feature = tree.feature.copy()
    feature[tree.feature == a], feature[tree.feature == b] = b, a
    return Tree(tree.left, tree.right, feature, tree.threshold, tree.value, tree.cover)


def test_symmetry():
    # an ensemble plus its a<->b mirror is symmetric in a and b when x_a == x_b
    for seed in range(100):
        rng = np.random.default_rng(seed)
        M = int(rng.integers(2, 8))
        a, b = rng.choice(M, size=2, replace=False)
        half = [random_tree(rng, list(range(M)), 3) for _ in range(int(rng.integers(1, 4)))]
        ens = TreeEnsemble(half + [swapped(t, a, b) for t in half], 0.0, 0.3, M)
        x = rng.normal(size=M)
        x[b] = x[a]
        for e in (tree_shap(ens, x), exact_shapley(ens, x)):
            assert abs(e.phi[a] - e.phi[b]) < 1e-9


def test_additivity():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        M = int(rng.integers(1, 10))
        A, B = random_ensemble(rng, M), random_ensemble(rng, M)
        B = TreeEnsemble(B.trees, B.base_score, A.learning_rate, M)
        both = TreeEnsemble(A.trees + B.trees, A.base_score + B.base_score, A.learning_rate, M)
        x = rng.normal(size=M)
        for explain in (tree_shap, exact_shapley):
            ea, eb, eab = explain(A, x), explain(B, x), explain(both, x)
            assert np.max(np.abs(eab.phi - (ea.phi + eb.phi))) < 1e-9
            assert eab.base_value == pytest.approx(ea.base_value + eb.base_value, abs=1e-9)


def test_empty_ensemble_and_duplicated_trees():
    ens = TreeEnsemble([], 0.7, 0.1, 4)
    e = tree_shap(ens, np.zeros(4))
    assert e.phi.tolist() == [0.0] * 4 and e.base_value == 0.7 and e.output == 0.7
    rng = np.random.default_rng(5)
    one = random_ensemble(rng, 5, n_trees=1)
    two = TreeEnsemble(one.trees * 2, one.base_score, one.learning_rate, 5)
    x = rng.normal(size=5)
    assert np.allclose(tree_shap(two, x).phi, 2 * tree_shap(one, x).phi, rtol=0, atol=1e-12)


def test_batched_rows_match_single_rows():
    ens, _, rng = random_case(7, 6)
    X = rng.normal(size=(25, 6))
    rows = explain_rows(ens, X, [f"s{i}" for i in range(25)])
    for i, e in enumerate(rows):
        one = tree_shap(ens, X[i])
        assert np.allclose(e.phi, one.phi, rtol=0, atol=1e-12)
        assert e.sample_id == f"s{i}" and e.base_value == one.base_value
    assert expected_value(ens) == pytest.approx(exact_shapley(ens, X[0]).base_value, abs=1e-12)


def test_trained_model_attributions_match_exact():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(300, 4))
    y = (X[:, 0] + X[:, 1] * X[:, 2] + rng.normal(scale=0.2, size=300) > 0.8).astype(int)
    model = train_gbdt(X, y, TrainConfig(num_trees=15, max_leaves=6))
    for x in X[:10]:
        assert np.allclose(tree_shap(model, x).phi, exact_shapley(model, x).phi, rtol=0, atol=1e-9)


def test_dimension_checks():
    ens = TreeEnsemble([], 0.0, 0.1, 3)
    for explain in (tree_shap, exact_shapley):
        with pytest.raises(DomainError):
            explain(ens, np.zeros(4))
    with pytest.raises(DomainError):
        explain_rows(ens, np.zeros((2, 4)))


# --- sampled estimator -----------------------------------------------------

def test_sampled_constant_model():
    bg = np.random.default_rng(0).normal(size=(20, 3))
    e = sampled_shapley(lambda Z: np.full(len(Z), 2.5), np.ones(3), bg, 50)
    assert e.phi.tolist() == [0.0, 0.0, 0.0] and e.base_value == 2.5 and e.correction == 0.0


def test_sampled_linear_model_is_within_three_standard_errors():
    rng = np.random.default_rng(1)
    w, b = np.array([1.5, -2.0, 0.5]), 0.3
    bg = rng.normal(size=(500, 3))
    x = np.array([1.0, 0.5, -1.0])
    e = sampled_shapley(lambda Z: Z @ w + b, x, bg, n_permutations=2000, seed=1)
    truth = w * (x - bg.mean(axis=0))
    assert np.all(np.abs(e.phi - truth) < 3 * e.stderr)
    assert e.residual == pytest.approx(0.0, abs=1e-9)


def test_sampled_gbdt_converges_to_exact():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(3000, 4))
    z = 2 * X[:, 0] - 1.5 * X[:, 1] + np.where(X[:, 2] > 0.5, 1.0, -1.0) + 0.5 * X[:, 3]
    y = (rng.random(3000) < 1 / (1 + np.exp(-(2 * z - 0.5)))).astype(int)
    model = train_gbdt(X, y, TrainConfig(num_trees=30, max_leaves=6, min_samples_leaf=20))
    assert model.used_features() == {0, 1, 2, 3}
    for i in range(3):
        exact = exact_shapley(model, X[i])
        approx = sampled_shapley(model.raw_score, X[i], X, n_permutations=5000, seed=i)
        assert np.max(np.abs(approx.phi - exact.phi)) < 0.05
        assert approx.base_value == pytest.approx(exact.base_value, abs=1e-9)
        assert abs(approx.residual) < 1e-9


def test_sampled_is_deterministic_and_validates_input():
    bg = np.random.default_rng(0).normal(size=(10, 2))
    f = lambda Z: Z[:, 0] * Z[:, 1]  # noqa: E731
    a = sampled_shapley(f, np.ones(2), bg, 30, seed=4)
    b = sampled_shapley(f, np.ones(2), bg, 30, seed=4)
    assert np.array_equal(a.phi, b.phi)
    with pytest.raises(DomainError):
        sampled_shapley(f, np.ones(2), np.empty((0, 2)))
    with pytest.raises(DomainError):
        sampled_shapley(f, np.ones(2), bg, 0)
    with pytest.raises(DomainError):
        sampled_shapley(f, np.ones(3), bg)


# --- aggregation and files -------------------------------------------------

def test_global_importance_ranking():
    one = Explanation(0.0, [0.1, -0.5, 0.3], 0.0, "a", ["x", "y", "z"])
    assert global_importance([one]).top(3) == ["y", "z", "x"]
    zeros = [Explanation(0.0, np.zeros(3), 0.0, i, ["x", "y", "z"]) for i in range(4)]
    imp = global_importance(zeros)
    assert imp.mean_abs.tolist() == [0.0] * 3 and imp.top(3) == ["x", "y", "z"]
    with pytest.raises(DomainError):
        global_importance([])
    with pytest.raises(DomainError):
        global_importance([one, Explanation(0.0, [1.0], 0.0)])


def test_importance_csv_and_explanation_json(tmp_path):
    ens, _, rng = random_case(3, 4)
    rows = explain_rows(ens, rng.normal(size=(5, 4)), list("abcde"))
    save_explanations(rows, tmp_path / "e.json")
    again = load_explanations(tmp_path / "e.json")
    for a, b in zip(rows, again):
        assert np.array_equal(a.phi, b.phi) and a.sample_id == b.sample_id
        assert a.base_value == b.base_value and a.output == b.output
    buf = io.StringIO()
    imp = global_importance(rows)
    imp.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "feature,mean_abs_phi,rank"
    assert [ln.split(",")[0] for ln in lines[1:]] == imp.top(4)
    assert imp.rank_of(imp.top(1)[0]) == 1
