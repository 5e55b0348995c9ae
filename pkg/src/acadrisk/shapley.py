"""Shapley-value attributions for tree-ensemble risk scores.

Three estimators share one output type:

* :func:`exact_shapley` enumerates every coalition of the features the
  ensemble actually uses, with a path-dependent (cover-weighted) value
  function.  Exponential, so it is the oracle.
* :func:`tree_shap` computes the same numbers in polynomial time.
* :func:`sampled_shapley` treats the model as a black box and averages
  marginal contributions over random feature orders, filling absent
  features from background rows.

All attributions are in raw log-odds units.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _backend
from .errors import DomainError, MalformedTreeError
from .trees import Tree, TreeEnsemble

MAX_EXACT_FEATURES = 20


@dataclass(eq=False)
class Explanation:
    base_value: float
    phi: np.ndarray
    output: float
    sample_id: object = None
    feature_names: Sequence[str] = ()
    method: str = ""
    correction: float = 0.0
    stderr: Optional[np.ndarray] = None

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)

    @property
    def residual(self) -> float:
        """``output - base_value - sum(phi)``; zero up to rounding."""
        return float(self.output - self.base_value - self.phi.sum())

    def named_phi(self) -> dict:
        names = self.feature_names or [f"f{i}" for i in range(len(self.phi))]
        return {name: float(v) for name, v in zip(names, self.phi)}

    def to_dict(self) -> dict:
        out = {"sample_id": self.sample_id, "base_value": float(self.base_value),
               "output": float(self.output), "phi": self.named_phi(), "method": self.method}
        if self.correction:
            out["correction"] = float(self.correction)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Explanation":
        names = list(d["phi"])
        return cls(d["base_value"], [d["phi"][k] for k in names], d["output"],
                   d.get("sample_id"), names, d.get("method", ""), d.get("correction", 0.0))


def _check_tree(tree: Tree):
    for node in range(tree.n_nodes):
        if not tree.is_leaf(node) and not tree.cover[node] > 0:
            raise MalformedTreeError(f"internal node {node} has zero cover")


def tree_conditional_expectation(tree: Tree, x, S) -> float:
    """Expected tree output given only the features in ``S`` are known.

    Splits on known features follow ``x``; splits on unknown features take
    the cover-weighted average of both children.
    """
    _check_tree(tree)
    S = set(int(s) for s in S)

    def visit(node):
        if tree.is_leaf(node):
            return float(tree.value[node])
        lo, hi = int(tree.left[node]), int(tree.right[node])
        f = int(tree.feature[node])
        if f in S:
            return visit(lo if x[f] <= tree.threshold[node] else hi)
        return (tree.cover[lo] * visit(lo) + tree.cover[hi] * visit(hi)) / tree.cover[node]

    return visit(0)


def _coalition_values(tree: Tree, x, bit_of: dict, masks: np.ndarray) -> np.ndarray:
    """Conditional expectation of ``tree`` for every coalition mask at once."""

    def visit(node):
        if tree.is_leaf(node):
            return np.full(len(masks), float(tree.value[node]))
        lo, hi = int(tree.left[node]), int(tree.right[node])
        f = int(tree.feature[node])
        v_lo, v_hi = visit(lo), visit(hi)
        known = (masks >> bit_of[f]) & 1 == 1
        follow = v_lo if x[f] <= tree.threshold[node] else v_hi
        avg = (tree.cover[lo] * v_lo + tree.cover[hi] * v_hi) / tree.cover[node]
        return np.where(known, follow, avg)

    return visit(0)


def exact_shapley(ensemble: TreeEnsemble, x, sample_id=None) -> Explanation:
    """Shapley values by enumerating all coalitions of the used features."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (ensemble.feature_count,):
        raise DomainError(f"expected {ensemble.feature_count} features, got {x.shape}")
    used = sorted(ensemble.used_features())
    m = len(used)
    if m > MAX_EXACT_FEATURES:
        raise DomainError(f"{m} used features exceeds the exact-enumeration limit of "
                          f"{MAX_EXACT_FEATURES}; use tree_shap instead")
    for t in ensemble.trees:
        _check_tree(t)
    bit_of = {f: k for k, f in enumerate(used)}
    masks = np.arange(1 << m, dtype=np.int64)
    v = np.zeros(len(masks))
    for t in ensemble.trees:
        v += _coalition_values(t, x, bit_of, masks)
    v *= ensemble.learning_rate

    sizes = np.array([bin(s).count("1") for s in range(1 << m)], dtype=np.int64)
    weight = np.array([math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m)
                       for s in range(m)]) if m else np.empty(0)
    phi = np.zeros(ensemble.feature_count)
    for f, k in bit_of.items():
        without = masks[(masks >> k) & 1 == 0]
        phi[f] = float(np.sum(weight[sizes[without]] * (v[without | (1 << k)] - v[without])))
    return Explanation(ensemble.base_score + v[0], phi, ensemble.base_score + v[-1],
                       sample_id, list(ensemble.feature_names), "exact")


def expected_value(ensemble: TreeEnsemble) -> float:
    """Cover-weighted mean raw score, the base value of path-dependent attributions."""
    total = 0.0
    for t in ensemble.trees:
        leaves = t.left < 0
        total += float(np.sum(t.value[leaves] * t.cover[leaves]) / t.cover[0])
    return ensemble.base_score + ensemble.learning_rate * total


def tree_shap(ensemble: TreeEnsemble, x, sample_id=None, backend=None) -> Explanation:
    """Polynomial-time path-dependent Shapley values for one sample."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (ensemble.feature_count,):
        raise DomainError(f"expected {ensemble.feature_count} features, got {x.shape}")
    kern = _backend.get(backend)
    phi = np.zeros(ensemble.feature_count)
    # covers were validated when the ensemble was built
    for t in ensemble.trees:
        if t.n_nodes == 1:
            continue
        kern.tree_shap(t.left, t.right, t.feature, t.threshold, t.value, t.cover, x, phi,
                       ensemble.learning_rate, t.max_depth)
    output = float(ensemble.raw_score(x[None, :], backend)[0])
    return Explanation(expected_value(ensemble), phi, output, sample_id,
                       list(ensemble.feature_names), "tree")


def _packed(ensemble: TreeEnsemble):
    trees = ensemble.trees
    cat = lambda name, dtype: np.ascontiguousarray(
        np.concatenate([getattr(t, name) for t in trees]) if trees else np.empty(0), dtype=dtype)
    offsets = np.zeros(len(trees) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([t.n_nodes for t in trees])
    depths = np.array([t.max_depth for t in trees], dtype=np.int64)
    return (cat("left", np.int64), cat("right", np.int64), cat("feature", np.int64),
            cat("threshold", np.float64), cat("value", np.float64), cat("cover", np.float64),
            offsets, depths)


def explain_rows(ensemble: TreeEnsemble, X, ids=None, backend=None) -> list:
    """:func:`tree_shap` for every row of ``X``, batched through one kernel call."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    if X.shape[1] != ensemble.feature_count:
        raise DomainError(f"expected {ensemble.feature_count} features, got {X.shape[1]}")
    ids = list(ids) if ids is not None else list(range(len(X)))
    kern = _backend.get(backend)
    phi = kern.tree_shap_many(*_packed(ensemble), X, ensemble.learning_rate)
    base = expected_value(ensemble)
    outputs = ensemble.raw_score(X, backend)
    names = list(ensemble.feature_names)
    return [Explanation(base, phi[r], float(outputs[r]), ids[r], names, "tree")
            for r in range(len(X))]


def sampled_shapley(model: Callable, x, background, n_permutations: int = 1000,
                    seed: int = 0, sample_id=None, feature_names=()) -> Explanation:
    """Monte Carlo permutation Shapley values for a black-box scorer.

    ``model`` maps an ``(n, M)`` array to ``n`` raw scores.  Each permutation
    starts from a random background row and switches features to ``x`` in
    random order.  The Monte Carlo residual is spread over the features in
    proportion to ``|phi|`` so that efficiency holds exactly; its size is
    kept in ``correction``.
    """
    x = np.asarray(x, dtype=np.float64)
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    if background.shape[0] == 0:
        raise DomainError("background set is empty")
    if n_permutations < 1:
        raise DomainError("n_permutations must be >= 1")
    M = x.shape[0]
    if background.shape[1] != M:
        raise DomainError("background and sample disagree on feature count")
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, background.shape[0], size=n_permutations)
    orders = np.argsort(rng.random((n_permutations, M)), axis=1)

    # point j of a permutation has its first j features (in that order) taken from x
    position = np.argsort(orders, axis=1)
    switched = position[:, None, :] < np.arange(M + 1)[None, :, None]
    points = np.where(switched, x[None, None, :], background[starts][:, None, :])
    scores = np.asarray(model(points.reshape(-1, M)), dtype=np.float64).reshape(n_permutations, M + 1)
    steps = np.diff(scores, axis=1)
    marginals = np.empty((n_permutations, M))
    np.put_along_axis(marginals, orders, steps, axis=1)

    phi = marginals.mean(axis=0)
    stderr = marginals.std(axis=0, ddof=1) / np.sqrt(n_permutations) if n_permutations > 1 else None
    base = float(np.mean(model(background)))
    output = float(np.asarray(model(x[None, :]))[0])
    residual = output - base - float(phi.sum())
    mag = np.abs(phi)
    if mag.sum() > 0:
        phi = phi + residual * mag / mag.sum()
    elif residual != 0:
        phi = phi + residual / M
    return Explanation(base, phi, output, sample_id, list(feature_names), "sampled",
                       correction=residual, stderr=stderr)


@dataclass
class GlobalImportance:
    feature_names: list
    mean_abs: np.ndarray
    per_sample: np.ndarray
    sample_ids: list = field(default_factory=list)

    @property
    def order(self) -> np.ndarray:
        idx = np.arange(len(self.mean_abs))
        return np.lexsort((idx, -self.mean_abs))

    @property
    def ranking(self) -> list:
        return [(self.feature_names[i], float(self.mean_abs[i])) for i in self.order]

    def top(self, k: int) -> list:
        return [name for name, _ in self.ranking[:k]]

    def rank_of(self, name: str) -> int:
        """One-based rank of ``name``."""
        return self.top(len(self.feature_names)).index(name) + 1

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["feature", "mean_abs_phi", "rank"])
        for rank, (name, value) in enumerate(self.ranking, start=1):
            writer.writerow([name, repr(value), rank])


def global_importance(explanations, feature_names=None) -> GlobalImportance:
    """Mean absolute contribution per feature across samples, highest first."""
    explanations = list(explanations)
    if not explanations:
        raise DomainError("no explanations to aggregate")
    M = len(explanations[0].phi)
    if any(len(e.phi) != M for e in explanations):
        raise DomainError("explanations disagree on feature count")
    names = list(feature_names or explanations[0].feature_names or [f"f{i}" for i in range(M)])
    per_sample = np.vstack([e.phi for e in explanations])
    return GlobalImportance(names, np.abs(per_sample).mean(axis=0), per_sample,
                            [e.sample_id for e in explanations])


def save_explanations(explanations, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([e.to_dict() for e in explanations], fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_explanations(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [Explanation.from_dict(d) for d in json.load(fh)]
