"""Learning interaction networks and their centrality features.

A grade group's network is the weighted sum of 0-1 co-membership layers
(dormitories, learning teams).  Three per-student features are read off it:
degree (quantity of partners), betweenness (mobility across teams) and
eigenvector centrality (quality of partners).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _backend
from .errors import ConvergenceError, DomainError, SchemaError

EIGEN_TOL = 1e-10
EIGEN_MAX_ITER = 10_000


@dataclass(frozen=True, eq=False)
class InteractionLayer:
    """0-1 co-membership layer: two distinct nodes are adjacent iff they share a group."""

    n: int
    membership: tuple
    name: str = ""

    @property
    def matrix(self) -> np.ndarray:
        index = {}
        groups = np.array([index.setdefault(g, len(index)) for g in self.membership])
        adj = (groups[:, None] == groups[None, :]).astype(np.float64)
        np.fill_diagonal(adj, 0.0)
        return adj


@dataclass(frozen=True, eq=False)
class InteractionGraph:
    weights: np.ndarray
    node_ids: tuple = ()

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, copy=True)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DomainError("weight matrix must be square")
        if not np.array_equal(w, w.T):
            raise DomainError("weight matrix must be symmetric")
        if np.any(np.diag(w) != 0) or np.any(w < 0) or not np.isfinite(w).all():
            raise DomainError("weights must be finite, non-negative, with zero diagonal")
        ids = tuple(str(i) for i in self.node_ids) or tuple(str(i) for i in range(w.shape[0]))
        if len(ids) != w.shape[0]:
            raise DomainError("node_ids length does not match matrix size")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "node_ids", ids)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def edges(self):
        """Upper-triangle ``(i, j, weight)`` triples with positive weight."""
        i, j = np.nonzero(np.triu(self.weights, 1))
        return [(int(a), int(b), float(self.weights[a, b])) for a, b in zip(i, j)]

    def permuted(self, perm) -> "InteractionGraph":
        perm = np.asarray(perm)
        return InteractionGraph(self.weights[np.ix_(perm, perm)],
                                [self.node_ids[p] for p in perm])


def build_layer(memberships, n: int, name: str = "") -> InteractionLayer:
    """Layer from a node -> group mapping (dict, or sequence indexed by node)."""
    if n <= 0:
        raise DomainError("a layer needs at least one node")
    if isinstance(memberships, dict):
        missing = [v for v in range(n) if v not in memberships]
        if missing:
            raise DomainError(f"nodes without membership: {missing[:10]}")
        extra = [v for v in memberships if not (isinstance(v, (int, np.integer)) and 0 <= v < n)]
        if extra:
            raise DomainError(f"membership for unknown nodes: {extra[:10]}")
        groups = tuple(memberships[v] for v in range(n))
    else:
        groups = tuple(memberships)
        if len(groups) != n:
            raise DomainError(f"expected {n} memberships, got {len(groups)}")
    return InteractionLayer(n, groups, name)


def synthesize(layers, layer_weights=None, node_ids=()) -> InteractionGraph:
    """Weighted sum of layers; weights default to 1 per layer."""
    layers = list(layers)
    if not layers:
        raise DomainError("at least one layer is required")
    if layer_weights is None:
        layer_weights = [1.0] * len(layers)
    if len(layer_weights) != len(layers):
        raise DomainError("one weight per layer is required")
    if any(not (w > 0) for w in layer_weights):
        raise DomainError("layer weights must be positive")
    n = layers[0].n
    if any(layer.n != n for layer in layers):
        raise DomainError("layers disagree on node count")
    total = np.zeros((n, n))
    for layer, w in zip(layers, layer_weights):
        total += w * layer.matrix
    return InteractionGraph(total, node_ids)


def degree_centrality(g: InteractionGraph) -> np.ndarray:
    """Weighted degree divided by ``(n - 1) * max weight``."""
    n = g.n
    if n < 2:
        raise DomainError("degree centrality needs at least two nodes")
    w_max = g.weights.max()
    if w_max == 0:
        return np.zeros(n)
    return g.weights.sum(axis=1) / (w_max * (n - 1))


def _csr(g: InteractionGraph):
    adj = g.weights > 0
    indptr = np.zeros(g.n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(adj.sum(axis=1))
    indices = np.ascontiguousarray(np.nonzero(adj)[1], dtype=np.int64)
    return indptr, indices


def _brandes_exact(indptr, indices, n):
    bc = [Fraction(0)] * n
    for s in range(n):
        sigma = [0] * n
        sigma[s] = 1
        dist = [-1] * n
        dist[s] = 0
        order = [s]
        preds = [[] for _ in range(n)]
        for v in order:
            for w in indices[indptr[v]:indptr[v + 1]]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    order.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [Fraction(0)] * n
        for w in reversed(order):
            for v in preds[w]:
                delta[v] += Fraction(sigma[v], sigma[w]) * (1 + delta[w])
            if w != s:
                bc[w] += delta[w]
    return bc


def betweenness_centrality(g: InteractionGraph, exact: bool = False, backend=None):
    """Normalised betweenness on the binarised graph (edge iff weight > 0).

    Pair dependencies are accumulated over unweighted shortest paths and the
    undirected total is scaled by ``2 / ((n - 1)(n - 2))``.  With
    ``exact=True`` the computation runs in rational arithmetic and returns a
    list of :class:`fractions.Fraction`.
    """
    n = g.n
    indptr, indices = _csr(g)
    if exact:
        if n < 3:
            return [Fraction(0)] * n
        raw = _brandes_exact(indptr.tolist(), indices.tolist(), n)
        return [b / ((n - 1) * (n - 2)) for b in raw]
    if n < 3:
        return np.zeros(n)
    # Each unordered pair is visited from both ends, which cancels the factor 2.
    raw = _backend.get(backend).brandes(indptr, indices, n)
    return raw / ((n - 1) * (n - 2))


def eigenvector_centrality(g: InteractionGraph, tol: float = EIGEN_TOL,
                           max_iter: int = EIGEN_MAX_ITER) -> np.ndarray:
    """Dominant eigenvector of the weight matrix, non-negative with unit 2-norm.

    Power iteration runs on ``W + c I`` with ``c`` half the largest row sum.
    The shift keeps the eigenvectors and makes the Perron root strictly
    dominant, so bipartite graphs converge instead of oscillating.
    """
    W = g.weights
    if not (W > 0).any():
        raise DomainError("eigenvector centrality needs at least one positive weight")
    shift = 0.5 * W.sum(axis=1).max()
    v = np.full(g.n, 1.0 / np.sqrt(g.n))
    for _ in range(max_iter):
        nxt = W @ v + shift * v
        nxt /= np.linalg.norm(nxt)
        if np.max(np.abs(nxt - v)) < tol:
            return np.abs(nxt)
        v = nxt
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps", last=v)


def centrality_triples(g: InteractionGraph, backend=None) -> np.ndarray:
    """``(n, 3)`` array of degree, betweenness and eigenvector centrality."""
    if not (g.weights > 0).any():
        return np.zeros((g.n, 3))
    return np.column_stack([degree_centrality(g), betweenness_centrality(g, backend=backend),
                            eigenvector_centrality(g)])


def attach_centrality_features(cohort, g: InteractionGraph):
    """Fill DgrCnt/BtwnCnt/EgnCnt in ``cohort`` from ``g``, matching rows by id."""
    cohort_ids, graph_ids = set(cohort.ids), set(g.node_ids)
    if cohort_ids != graph_ids or len(cohort.ids) != g.n:
        only_cohort = sorted(cohort_ids - graph_ids)
        only_graph = sorted(graph_ids - cohort_ids)
        raise SchemaError(f"graph/cohort id mismatch: missing from graph {only_cohort[:20]}, "
                          f"missing from cohort {only_graph[:20]}")
    triples = centrality_triples(g)
    pos = {sid: i for i, sid in enumerate(g.node_ids)}
    order = [pos[sid] for sid in cohort.ids]
    names = [n for n in ("DgrCnt", "BtwnCnt", "EgnCnt") if n in cohort.feature_names]
    cols = {name: triples[order, k] for k, name in enumerate(("DgrCnt", "BtwnCnt", "EgnCnt"))
            if name in names}
    return cohort.with_columns(cols)


def load_layers(path, node_ids):
    """Read a layers JSON file and return ``(layers, weights)`` over ``node_ids``.

    The file is a list of ``{layer_name, weight, groups: {group_id: [ids]}}``.
    Students not listed in a layer become singletons there.
    """
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    return layers_from_spec(spec, node_ids)


def layers_from_spec(spec, node_ids):
    node_ids = [str(i) for i in node_ids]
    pos = {sid: i for i, sid in enumerate(node_ids)}
    layers, weights = [], []
    for entry in spec:
        name = entry.get("layer_name", "")
        membership = {}
        for gid, members in entry["groups"].items():
            for sid in members:
                sid = str(sid)
                if sid not in pos:
                    raise SchemaError(f"layer {name!r}: unknown student {sid!r}")
                if pos[sid] in membership:
                    raise SchemaError(f"layer {name!r}: student {sid!r} in two groups")
                membership[pos[sid]] = ("g", gid)
        for i in range(len(node_ids)):
            membership.setdefault(i, ("solo", i))
        layers.append(build_layer(membership, len(node_ids), name))
        weights.append(float(entry.get("weight", 1.0)))
    return layers, weights


def layers_to_spec(layers, weights, node_ids):
    """Inverse of :func:`layers_from_spec`; groups are renamed by first appearance."""
    out = []
    for n, (layer, w) in enumerate(zip(layers, weights)):
        groups = {}
        for i, gid in enumerate(layer.membership):
            groups.setdefault(gid, []).append(str(node_ids[i]))
        name = layer.name or f"layer{n}"
        members = [v for v in groups.values() if len(v) > 1]
        out.append({"layer_name": name, "weight": w,
                    "groups": {f"{name}-{k}": v for k, v in enumerate(members)}})
    return out


def write_edge_list(g: InteractionGraph, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["id_i", "id_j", "weight"])
    for i, j, w in g.edges():
        writer.writerow([g.node_ids[i], g.node_ids[j], repr(w)])
