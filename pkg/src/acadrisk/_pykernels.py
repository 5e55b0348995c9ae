"""Pure Python/numpy versions of the hot loops.

Each function mirrors one in ``_ckernels.pyx`` with the same signature and,
where floating-point summation order matters, the same order of operations.
"""
import numpy as np


def build_histograms(binned, grad, hess, rows, n_bins):
    """Per-feature gradient/hessian/count histograms over ``rows``.

    Returns ``(hist, counts)`` with ``hist[f, b] = (sum g, sum h)`` and
    ``counts[f, b]`` the number of samples in bin ``b``.  Samples are added in
    the order given by ``rows``.
    """
    n_features = binned.shape[1]
    hist = np.zeros((n_features, n_bins, 2))
    counts = np.zeros((n_features, n_bins), dtype=np.int64)
    g = grad[rows]
    h = hess[rows]
    sub = binned[rows]
    for f in range(n_features):
        b = sub[:, f]
        hist[f, :, 0] = np.bincount(b, weights=g, minlength=n_bins)
        hist[f, :, 1] = np.bincount(b, weights=h, minlength=n_bins)
        counts[f] = np.bincount(b, minlength=n_bins)
    return hist, counts


def predict_tree(left, right, feature, threshold, value, X):
    # level-synchronous descent: every row advances one edge per pass
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    active = left[node] >= 0
    while active.any():
        r, nd = rows[active], node[active]
        go_left = X[r, feature[nd]] <= threshold[nd]
        node[active] = np.where(go_left, left[nd], right[nd])
        active = left[node] >= 0
    return value[node].astype(np.float64)


def _extend(path, pz, po, pi):
    depth = len(path)
    path.append([pi, pz, po, 1.0 if depth == 0 else 0.0])
    for i in range(depth - 1, -1, -1):
        path[i + 1][3] += po * path[i][3] * (i + 1) / (depth + 1)
        path[i][3] = pz * path[i][3] * (depth - i) / (depth + 1)


def _unwind(path, k):
    depth = len(path) - 1
    _, z, o, _ = path[k]
    weights = [p[3] for p in path]
    nxt = weights[depth]
    for i in range(depth - 1, -1, -1):
        if o != 0:
            tmp = weights[i]
            weights[i] = nxt * (depth + 1) / ((i + 1) * o)
            nxt = tmp - weights[i] * z * (depth - i) / (depth + 1)
        else:
            weights[i] = weights[i] * (depth + 1) / (z * (depth - i))
    out = [list(p) for i, p in enumerate(path[:-1])]
    for i in range(depth):
        out[i][3] = weights[i]
    for i in range(k, depth):
        out[i][0:3] = path[i + 1][0:3]
    return out


def _unwound_sum(path, k):
    depth = len(path) - 1
    _, z, o, _ = path[k]
    nxt = path[depth][3]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if o != 0:
            tmp = nxt * (depth + 1) / ((i + 1) * o)
            total += tmp
            nxt = path[i][3] - tmp * z * (depth - i) / (depth + 1)
        else:
            total += (path[i][3] / z) / ((depth - i) / (depth + 1))
    return total


def tree_shap(left, right, feature, threshold, value, cover, x, phi, scale, max_depth):
    """Add ``scale`` times one tree's path-dependent Shapley values to ``phi``."""

    def recurse(node, path, pz, po, pi):
        path = [list(p) for p in path]
        _extend(path, pz, po, pi)
        if left[node] < 0:
            for k in range(1, len(path)):
                _, z, o, _ = path[k]
                if o == z:
                    continue
                phi[path[k][0]] += scale * _unwound_sum(path, k) * (o - z) * value[node]
            return
        f = feature[node]
        if x[f] <= threshold[node]:
            hot, cold = left[node], right[node]
        else:
            hot, cold = right[node], left[node]
        iz = io = 1.0
        for k in range(1, len(path)):
            if path[k][0] == f:
                iz, io = path[k][1], path[k][2]
                path = _unwind(path, k)
                break
        w = cover[node]
        recurse(hot, path, iz * cover[hot] / w, io, f)
        recurse(cold, path, iz * cover[cold] / w, 0.0, f)

    recurse(0, [], 1.0, 1.0, -1)


def brandes(indptr, indices, n):
    """Unnormalised betweenness over all ordered source/target pairs."""
    bc = np.zeros(n)
    for s in range(n):
        stack = []
        preds = [[] for _ in range(n)]
        sigma = np.zeros(n)
        sigma[s] = 1.0
        dist = np.full(n, -1, dtype=np.int64)
        dist[s] = 0
        queue = [s]
        head = 0
        while head < len(queue):
            v = queue[head]
            head += 1
            stack.append(v)
            for p in range(indptr[v], indptr[v + 1]):
                w = indices[p]
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = np.zeros(n)
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
    return bc


def tree_shap_many(left, right, feature, threshold, value, cover, offsets, depths, X, scale):
    """Shapley values of every row of ``X`` for trees packed end to end.

    Tree ``t`` occupies nodes ``offsets[t]:offsets[t + 1]`` with child indices
    local to the tree.  Returns an ``(n_rows, n_features)`` array.
    """
    phi = np.zeros(X.shape)
    for t in range(len(offsets) - 1):
        a, b = offsets[t], offsets[t + 1]
        if b - a == 1:
            continue
        for r in range(X.shape[0]):
            tree_shap(left[a:b], right[a:b], feature[a:b], threshold[a:b], value[a:b],
                      cover[a:b], X[r], phi[r], scale, depths[t])
    return phi
