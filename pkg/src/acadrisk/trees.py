"""Second-order gradient-boosted decision trees for binary risk labels.

Trees grow leaf-wise: the leaf whose best histogram split has the largest
gain is split next, until ``max_leaves`` is reached or no split helps.
Ordinal categoricals are split by a threshold on their code, exactly like
numeric features.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import _backend
from .errors import DomainError, MalformedTreeError, SingleClassError

MIN_SPLIT_GAIN = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    num_trees: int = 200
    max_leaves: int = 15
    min_samples_leaf: int = 5
    lambda_: float = 1.0
    learning_rate: float = 0.1
    histogram_bins: int = 64
    pos_weight: Optional[float] = None  # None: negatives / positives
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1:
            raise DomainError("num_trees must be >= 1")
        if self.max_leaves < 2:
            raise DomainError("max_leaves must be >= 2")
        if self.min_samples_leaf < 1:
            raise DomainError("min_samples_leaf must be >= 1")
        if self.lambda_ < 0:
            raise DomainError("lambda must be >= 0")
        if not (0 < self.learning_rate <= 1):
            raise DomainError("learning_rate must lie in (0, 1]")
        if not (2 <= self.histogram_bins <= 256):
            raise DomainError("histogram_bins must lie in [2, 256]")
        if self.pos_weight is not None and not self.pos_weight > 0:
            raise DomainError("pos_weight must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lambda_")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "lambda" in d:
            d["lambda_"] = d.pop("lambda")
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise DomainError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


def leaf_weight(G: float, H: float, lambda_: float) -> float:
    """Newton step for a leaf: ``-G / (H + lambda)``."""
    if not H + lambda_ > 0:
        raise DomainError(f"leaf weight undefined for H + lambda = {H + lambda_}")
    return -G / (H + lambda_)


def split_gain(GL: float, HL: float, GR: float, HR: float, lambda_: float) -> float:
    """Loss reduction of splitting one leaf into two (half the usual score difference)."""
    if not (HL + lambda_ > 0 and HR + lambda_ > 0 and HL + HR + lambda_ > 0):
        raise DomainError("split gain undefined: hessian sums plus lambda must be positive")
    return 0.5 * (GL * GL / (HL + lambda_) + GR * GR / (HR + lambda_)
                  - (GL + GR) ** 2 / (HL + HR + lambda_))


class Tree:
    """Flat-array binary tree.  Node 0 is the root; ``left[i] == -1`` marks a leaf.

    A sample goes left at node ``i`` when ``x[feature[i]] <= threshold[i]``.
    """

    def __init__(self, left, right, feature, threshold, value, cover):
        self.left = np.ascontiguousarray(left, dtype=np.int64)
        self.right = np.ascontiguousarray(right, dtype=np.int64)
        self.feature = np.ascontiguousarray(feature, dtype=np.int64)
        self.threshold = np.ascontiguousarray(threshold, dtype=np.float64)
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.cover = np.ascontiguousarray(cover, dtype=np.float64)
        n = len(self.left)
        if n == 0 or not all(len(a) == n for a in (self.right, self.feature, self.threshold,
                                                   self.value, self.cover)):
            raise MalformedTreeError("node arrays must be non-empty and of equal length")
        self.max_depth = self._depth()

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def _depth(self) -> int:
        depth, stack, seen = 0, [(0, 0)], 0
        while stack:
            node, d = stack.pop()
            seen += 1
            if seen > self.n_nodes:
                raise MalformedTreeError("tree contains a cycle")
            depth = max(depth, d)
            if self.left[node] >= 0:
                stack.append((int(self.right[node]), d + 1))
                stack.append((int(self.left[node]), d + 1))
        return depth

    def validate(self, feature_count: Optional[int] = None) -> None:
        for node in range(self.n_nodes):
            if self.is_leaf(node):
                if self.cover[node] < 0:
                    raise MalformedTreeError(f"leaf {node} has negative cover")
                continue
            if not self.cover[node] > 0:
                raise MalformedTreeError(f"internal node {node} has zero cover")
            lc, rc = self.cover[self.left[node]], self.cover[self.right[node]]
            if not math.isclose(lc + rc, self.cover[node], rel_tol=1e-12, abs_tol=1e-12):
                raise MalformedTreeError(f"node {node}: cover {self.cover[node]} != {lc} + {rc}")
            if feature_count is not None and not 0 <= self.feature[node] < feature_count:
                raise MalformedTreeError(f"node {node} splits on feature {self.feature[node]}")

    def used_features(self) -> set:
        return {int(f) for node, f in enumerate(self.feature) if not self.is_leaf(node)}

    def predict(self, X, backend=None) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        return _backend.get(backend).predict_tree(self.left, self.right, self.feature,
                                                  self.threshold, self.value, X)

    def apply_one(self, x) -> int:
        node = 0
        while self.left[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return int(node)

    def to_dict(self, node: int = 0) -> dict:
        if self.is_leaf(node):
            return {"value": float(self.value[node]), "cover": float(self.cover[node])}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "cover": float(self.cover[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        cols = {k: [] for k in ("left", "right", "feature", "threshold", "value", "cover")}

        def visit(node):
            idx = len(cols["left"])
            for k in cols:
                cols[k].append(0)
            cols["cover"][idx] = node["cover"]
            if "left" in node:
                cols["feature"][idx] = node["feature"]
                cols["threshold"][idx] = node["threshold"]
                cols["value"][idx] = 0.0
                cols["left"][idx] = visit(node["left"])
                cols["right"][idx] = visit(node["right"])
            else:
                cols["left"][idx] = cols["right"][idx] = cols["feature"][idx] = -1
                cols["threshold"][idx] = 0.0
                cols["value"][idx] = node["value"]
            return idx

        visit(d)
        return cls(**cols)

    @classmethod
    def stump(cls, feature, threshold, left_value, right_value, left_cover, right_cover):
        return cls([1, -1, -1], [2, -1, -1], [feature, -1, -1], [threshold, 0.0, 0.0],
                   [0.0, left_value, right_value],
                   [left_cover + right_cover, left_cover, right_cover])

    def __eq__(self, other):
        if not isinstance(other, Tree):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("left", "right", "feature", "threshold", "value", "cover"))


@dataclass(eq=False)
class TreeEnsemble:
    """``raw(x) = base_score + learning_rate * sum_t tree_t(x)``; probability is its logistic."""

    trees: list
    base_score: float
    learning_rate: float
    feature_count: int
    feature_names: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        for t in self.trees:
            t.validate(self.feature_count)

    def _check(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if X.shape[1] != self.feature_count:
            raise DomainError(f"expected {self.feature_count} features, got {X.shape[1]}")
        return X

    def raw_score(self, X, backend=None) -> np.ndarray:
        X = self._check(X)
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += t.predict(X, backend)
        return self.base_score + self.learning_rate * total

    def staged_raw_score(self, X):
        """Raw scores after 0, 1, ..., T trees."""
        X = self._check(X)
        total = np.zeros(X.shape[0])
        yield self.base_score + self.learning_rate * total
        for t in self.trees:
            total = total + t.predict(X)
            yield self.base_score + self.learning_rate * total

    def predict_proba(self, X) -> np.ndarray:
        """Risk probability for each row of ``X``."""
        return _sigmoid(self.raw_score(X))

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(X) >= threshold).astype(np.int64)

    def used_features(self) -> set:
        out = set()
        for t in self.trees:
            out |= t.used_features()
        return out

    def to_dict(self) -> dict:
        return {
            "base_score": float(self.base_score),
            "learning_rate": float(self.learning_rate),
            "feature_count": int(self.feature_count),
            "feature_names": list(self.feature_names),
            "config": dict(self.config),
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        return cls([Tree.from_dict(t) for t in d["trees"]], float(d["base_score"]),
                   float(d["learning_rate"]), int(d["feature_count"]),
                   list(d.get("feature_names", [])), dict(d.get("config", {})))

    @classmethod
    def from_json(cls, text: str) -> "TreeEnsemble":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, TreeEnsemble):
            return NotImplemented
        return self.to_json() == other.to_json()


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sample_weights(y, pos_weight: float) -> np.ndarray:
    return np.where(np.asarray(y) == 1, pos_weight, 1.0)


def weighted_log_loss(raw, y, w) -> float:
    """Mean weighted logistic loss of raw scores."""
    raw = np.asarray(raw, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    # log(1 + e^z) - y z, computed stably
    loss = np.logaddexp(0.0, raw) - y * raw
    return float(np.sum(w * loss) / np.sum(w))


def bin_thresholds(column, n_bins: int) -> np.ndarray:
    """Candidate split thresholds (at most ``n_bins - 1``) for one feature.

    Thresholds are midpoints between consecutive distinct values.  When there
    are more distinct values than bins, only midpoints just above sample
    quantiles are kept.  The result depends only on the multiset of values.
    """
    uniq = np.unique(column)
    if len(uniq) <= 1:
        return np.empty(0)
    if len(uniq) <= n_bins:
        lo, hi = uniq[:-1], uniq[1:]
    else:
        srt = np.sort(column)
        cuts = np.unique(srt[(np.arange(1, n_bins) * len(srt)) // n_bins])
        idx = np.searchsorted(uniq, cuts)
        idx = idx[idx < len(uniq) - 1]
        lo, hi = uniq[idx], uniq[idx + 1]
    mid = lo + (hi - lo) / 2
    # guard against midpoints that round up onto the next value
    return np.where(mid < hi, mid, lo)


def _best_split(hist, counts, n_edges, lambda_, min_leaf, G, H, n):
    """Best ``(gain, feature, bin)`` over all features for one leaf, or None.

    ``np.argmax`` on the feature-major flattened gains returns the first
    maximum, which is the lowest feature and then the lowest threshold.
    """
    GL = np.cumsum(hist[:, :, 0], axis=1)
    HL = np.cumsum(hist[:, :, 1], axis=1)
    NL = np.cumsum(counts, axis=1)
    GR, HR, NR = G - GL, H - HL, n - NL
    ok = (NL >= min_leaf) & (NR >= min_leaf) & (np.arange(hist.shape[1])[None, :] < n_edges[:, None])
    if not ok.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (GL ** 2 / (HL + lambda_) + GR ** 2 / (HR + lambda_) - G ** 2 / (H + lambda_))
    gain = np.where(ok, gain, -np.inf)
    flat = int(np.argmax(gain))
    f, b = divmod(flat, hist.shape[1])
    if not gain[f, b] > MIN_SPLIT_GAIN:
        return None
    return float(gain[f, b]), f, b


class _Leaf:
    __slots__ = ("rows", "split", "children", "value", "G", "H")

    def __init__(self, rows, G, H):
        self.rows = rows
        self.G, self.H = G, H
        self.split = None
        self.children = None
        self.value = 0.0


def _grow_tree(binned, edges, grad, hess, config, kern):
    rows = np.arange(binned.shape[0], dtype=np.int64)
    lam = config.lambda_

    def evaluate(leaf):
        hist, counts = kern.build_histograms(binned, grad, hess, leaf.rows, len_bins)
        leaf.split = _best_split(hist, counts, n_edges, lam, config.min_samples_leaf,
                                 leaf.G, leaf.H, len(leaf.rows))

    len_bins = config.histogram_bins
    n_edges = np.array([len(e) for e in edges])
    root = _Leaf(rows, float(np.sum(grad)), float(np.sum(hess)))
    evaluate(root)
    frontier = [root]
    n_leaves = 1
    while n_leaves < config.max_leaves:
        best = None
        for leaf in frontier:
            if leaf.split is not None and (best is None or leaf.split[0] > best.split[0]):
                best = leaf
        if best is None:
            break
        _, f, b = best.split
        goes_left = binned[best.rows, f] <= b
        children = []
        for mask in (goes_left, ~goes_left):
            sub = best.rows[mask]
            child = _Leaf(sub, float(np.sum(grad[sub])), float(np.sum(hess[sub])))
            evaluate(child)
            children.append(child)
        best.children = children
        idx = frontier.index(best)
        frontier[idx:idx + 1] = children
        n_leaves += 1
    cols = {k: [] for k in ("left", "right", "feature", "threshold", "value", "cover")}

    def emit(node):
        i = len(cols["left"])
        for k in cols:
            cols[k].append(0)
        cols["cover"][i] = float(len(node.rows))
        if node.children is None:
            cols["left"][i] = cols["right"][i] = cols["feature"][i] = -1
            cols["threshold"][i] = 0.0
            cols["value"][i] = leaf_weight(node.G, node.H, lam)
        else:
            _, f, b = node.split
            cols["feature"][i] = f
            cols["threshold"][i] = float(edges[f][b])
            cols["value"][i] = 0.0
            cols["left"][i] = emit(node.children[0])
            cols["right"][i] = emit(node.children[1])
        return i

    emit(root)
    return Tree(**cols)


def train_gbdt(X, y, config: TrainConfig = TrainConfig(), feature_names=None,
               backend=None) -> TreeEnsemble:
    """Fit a boosted ensemble with weighted logistic loss.

    Rows are put into a canonical order first, so the fitted model does not
    depend on the order in which rows are supplied.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DomainError("X must be (n, M) with one label per row")
    if not np.isfinite(X).all():
        raise DomainError("features must be finite (run featurize before training)")
    n, M = X.shape
    if n < 2:
        raise DomainError("need at least two rows")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == n:
        raise SingleClassError("labels contain a single class; both risk and no-risk rows "
                               "are needed to train a classifier")
    if n < config.min_samples_leaf:
        raise DomainError(f"{n} rows is fewer than min_samples_leaf={config.min_samples_leaf}")
    kern = _backend.get(backend)

    order = np.lexsort([y] + [X[:, j] for j in range(M - 1, -1, -1)])
    X, y = X[order], y[order]

    pos_weight = config.pos_weight if config.pos_weight is not None else (n - n_pos) / n_pos
    w = sample_weights(y, pos_weight)
    base_score = math.log(float(np.sum(w * y)) / float(np.sum(w * (1 - y))))

    edges = [bin_thresholds(X[:, f], config.histogram_bins) for f in range(M)]
    binned = np.empty((n, M), dtype=np.uint8)
    for f in range(M):
        binned[:, f] = np.searchsorted(edges[f], X[:, f], side="left")

    raw = np.full(n, base_score)
    trees = []
    for _ in range(config.num_trees):
        p = _sigmoid(raw)
        grad = np.ascontiguousarray(w * (p - y))
        hess = np.ascontiguousarray(w * p * (1.0 - p))
        tree = _grow_tree(binned, edges, grad, hess, config, kern)
        trees.append(tree)
        raw = raw + config.learning_rate * tree.predict(X, backend)
    cfg = config.to_dict()
    cfg["pos_weight_used"] = pos_weight
    return TreeEnsemble(trees, base_score, config.learning_rate, M,
                        list(feature_names) if feature_names is not None else [], cfg)


def predict_proba(ensemble: TreeEnsemble, x) -> float:
    """Risk probability for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DomainError("predict_proba expects a single feature vector")
    return float(ensemble.predict_proba(x[None, :])[0])


def save_model(ensemble: TreeEnsemble, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(ensemble.to_json())


def load_model(path) -> TreeEnsemble:
    with open(path, encoding="utf-8") as fh:
        return TreeEnsemble.from_json(fh.read())
