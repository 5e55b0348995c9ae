"""Shared generators for random trees, ensembles and small graphs."""
import numpy as np
import pytest

from acadrisk import Tree, TreeEnsemble
from acadrisk._backend import NAME as ACTIVE_BACKEND


def random_tree(rng, features, max_depth=4, total_cover=1000, leaf_rate=0.25):
    """Random well-formed tree splitting only on ``features``.

    Covers are integers that add up exactly; leaf values are standard normal.
    """
    cols = {k: [] for k in ("left", "right", "feature", "threshold", "value", "cover")}

    def grow(depth, cover):
        i = len(cols["left"])
        for k in cols:
            cols[k].append(0)
        cols["cover"][i] = float(cover)
        stop = depth == max_depth or cover < 2 or (depth > 0 and rng.random() < leaf_rate)
        if stop:
            cols["left"][i] = cols["right"][i] = cols["feature"][i] = -1
            cols["value"][i] = float(rng.normal())
            return i
        cols["feature"][i] = int(rng.choice(features))
        cols["threshold"][i] = float(rng.normal())
        left_cover = int(rng.integers(1, cover))
        cols["left"][i] = grow(depth + 1, left_cover)
        cols["right"][i] = grow(depth + 1, cover - left_cover)
        return i

    grow(0, total_cover)
    return Tree(**cols)


def random_ensemble(rng, n_features, n_trees=None, max_depth=4, used=None):
    """Ensemble over ``n_features`` whose splits use only the ``used`` subset."""
    used = list(range(n_features)) if used is None else list(used)
    n_trees = int(rng.integers(1, 6)) if n_trees is None else n_trees
    trees = [random_tree(rng, used, max_depth) for _ in range(n_trees)]
    return TreeEnsemble(trees, float(rng.normal()), float(rng.uniform(0.05, 1.0)), n_features,
                        [f"f{i}" for i in range(n_features)])


def random_graph(rng, n, p=None, weighted=False):
    p = rng.uniform(0.1, 0.7) if p is None else p
    upper = np.triu(rng.random((n, n)) < p, 1)
    w = upper * (rng.integers(1, 4, size=(n, n)) if weighted else 1)
    return (w + w.T).astype(np.float64)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def cython_available():
    return ACTIVE_BACKEND == "cython"
