# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in :mod:`acadrisk._pykernels`."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


def build_histograms(const cnp.uint8_t[:, ::1] binned, const double[::1] grad,
                     const double[::1] hess, const cnp.int64_t[::1] rows, int n_bins):
    cdef Py_ssize_t n_features = binned.shape[1]
    cdef Py_ssize_t k = rows.shape[0]
    hist_arr = np.zeros((n_features, n_bins, 2))
    counts_arr = np.zeros((n_features, n_bins), dtype=np.int64)
    cdef double[:, :, ::1] hist = hist_arr
    cdef cnp.int64_t[:, ::1] counts = counts_arr
    cdef Py_ssize_t i, f, r
    cdef int b
    cdef double g, h
    with nogil:
        for i in range(k):
            r = rows[i]
            g = grad[r]
            h = hess[r]
            for f in range(n_features):
                b = binned[r, f]
                hist[f, b, 0] += g
                hist[f, b, 1] += h
                counts[f, b] += 1
    return hist_arr, counts_arr


def predict_tree(const cnp.int64_t[::1] left, const cnp.int64_t[::1] right,
                 const cnp.int64_t[::1] feature, const double[::1] threshold,
                 const double[::1] value, const double[:, :] X):
    cdef Py_ssize_t n = X.shape[0]
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t r, node
    with nogil:
        for r in range(n):
            node = 0
            while left[node] >= 0:
                if X[r, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[r] = value[node]
    return out_arr


cdef struct PathElement:
    Py_ssize_t feature
    double zero
    double one
    double pweight


cdef void extend_path(PathElement* path, Py_ssize_t depth, double pz, double po,
                      Py_ssize_t pi) noexcept nogil:
    cdef Py_ssize_t i
    path[depth].feature = pi
    path[depth].zero = pz
    path[depth].one = po
    path[depth].pweight = 1.0 if depth == 0 else 0.0
    i = depth - 1
    while i >= 0:
        path[i + 1].pweight += po * path[i].pweight * (i + 1) / (depth + 1)
        path[i].pweight = pz * path[i].pweight * (depth - i) / (depth + 1)
        i -= 1


cdef void unwind_path(PathElement* path, Py_ssize_t depth, Py_ssize_t k) noexcept nogil:
    cdef double o = path[k].one
    cdef double z = path[k].zero
    cdef double nxt = path[depth].pweight
    cdef double tmp
    cdef Py_ssize_t i = depth - 1
    while i >= 0:
        if o != 0:
            tmp = path[i].pweight
            path[i].pweight = nxt * (depth + 1) / ((i + 1) * o)
            nxt = tmp - path[i].pweight * z * (depth - i) / (depth + 1)
        else:
            path[i].pweight = (path[i].pweight * (depth + 1)) / (z * (depth - i))
        i -= 1
    for i in range(k, depth):
        path[i].feature = path[i + 1].feature
        path[i].zero = path[i + 1].zero
        path[i].one = path[i + 1].one


cdef double unwound_sum(PathElement* path, Py_ssize_t depth, Py_ssize_t k) noexcept nogil:
    cdef double o = path[k].one
    cdef double z = path[k].zero
    cdef double nxt = path[depth].pweight
    cdef double total = 0.0
    cdef double tmp
    cdef Py_ssize_t i = depth - 1
    while i >= 0:
        if o != 0:
            tmp = nxt * (depth + 1) / ((i + 1) * o)
            total += tmp
            nxt = path[i].pweight - tmp * z * (depth - i) / (depth + 1)
        else:
            total += (path[i].pweight / z) / ((depth - i) / <double>(depth + 1))
        i -= 1
    return total


cdef void shap_recurse(const cnp.int64_t* left, const cnp.int64_t* right,
                       const cnp.int64_t* feature, const double* threshold,
                       const double* value, const double* cover, const double* x,
                       double* phi, double scale, Py_ssize_t node, PathElement* parent,
                       Py_ssize_t depth, double pz, double po, Py_ssize_t pi) noexcept nogil:
    cdef PathElement* path = parent + depth + 1
    cdef Py_ssize_t i, k, f, hot, cold
    cdef double iz, io, w
    for i in range(depth):
        path[i] = parent[i]
    extend_path(path, depth, pz, po, pi)
    if left[node] < 0:
        for k in range(1, depth + 1):
            if path[k].one == path[k].zero:
                continue
            phi[path[k].feature] += (scale * unwound_sum(path, depth, k)
                                     * (path[k].one - path[k].zero) * value[node])
        return
    f = feature[node]
    if x[f] <= threshold[node]:
        hot = left[node]
        cold = right[node]
    else:
        hot = right[node]
        cold = left[node]
    iz = 1.0
    io = 1.0
    for k in range(1, depth + 1):
        if path[k].feature == f:
            iz = path[k].zero
            io = path[k].one
            unwind_path(path, depth, k)
            depth -= 1
            break
    w = cover[node]
    shap_recurse(left, right, feature, threshold, value, cover, x, phi, scale, hot, path,
                 depth + 1, iz * cover[hot] / w, io, f)
    shap_recurse(left, right, feature, threshold, value, cover, x, phi, scale, cold, path,
                 depth + 1, iz * cover[cold] / w, 0.0, f)


def tree_shap(const cnp.int64_t[::1] left, const cnp.int64_t[::1] right,
              const cnp.int64_t[::1] feature, const double[::1] threshold,
              const double[::1] value, const double[::1] cover, const double[::1] x,
              double[::1] phi, double scale, Py_ssize_t max_depth):
    # One path copy per recursion level, each one element longer than its parent.
    cdef PathElement* buf = <PathElement*> malloc(
        sizeof(PathElement) * ((max_depth + 2) * (max_depth + 3) // 2 + 1))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            shap_recurse(&left[0], &right[0], &feature[0], &threshold[0], &value[0],
                         &cover[0], &x[0], &phi[0], scale, 0, buf, 0, 1.0, 1.0, -1)
    finally:
        free(buf)


def brandes(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices, Py_ssize_t n):
    bc_arr = np.zeros(n)
    cdef double[::1] bc = bc_arr
    sigma_arr = np.empty(n)
    delta_arr = np.empty(n)
    dist_arr = np.empty(n, dtype=np.int64)
    stack_arr = np.empty(n, dtype=np.int64)
    cdef double[::1] sigma = sigma_arr
    cdef double[::1] delta = delta_arr
    cdef cnp.int64_t[::1] dist = dist_arr
    cdef cnp.int64_t[::1] order = stack_arr
    cdef Py_ssize_t s, v, w, p, head, tail, top
    with nogil:
        for s in range(n):
            for v in range(n):
                sigma[v] = 0.0
                delta[v] = 0.0
                dist[v] = -1
            sigma[s] = 1.0
            dist[s] = 0
            order[0] = s
            head = 0
            tail = 1
            while head < tail:
                v = order[head]
                head += 1
                for p in range(indptr[v], indptr[v + 1]):
                    w = indices[p]
                    if dist[w] < 0:
                        dist[w] = dist[v] + 1
                        order[tail] = w
                        tail += 1
                    if dist[w] == dist[v] + 1:
                        sigma[w] += sigma[v]
            # BFS order doubles as the stack and predecessors are recovered from
            # distances; each w adds to each predecessor once, in pop order.
            top = tail - 1
            while top >= 0:
                w = order[top]
                top -= 1
                for p in range(indptr[w], indptr[w + 1]):
                    v = indices[p]
                    if dist[v] == dist[w] - 1:
                        delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
                if w != s:
                    bc[w] += delta[w]
    return bc_arr


def tree_shap_many(const cnp.int64_t[::1] left, const cnp.int64_t[::1] right,
                   const cnp.int64_t[::1] feature, const double[::1] threshold,
                   const double[::1] value, const double[::1] cover,
                   const cnp.int64_t[::1] offsets, const cnp.int64_t[::1] depths,
                   const double[:, ::1] X, double scale):
    cdef Py_ssize_t n_rows = X.shape[0]
    cdef Py_ssize_t n_trees = offsets.shape[0] - 1
    phi_arr = np.zeros((n_rows, X.shape[1]))
    cdef double[:, ::1] phi = phi_arr
    cdef Py_ssize_t t, r, a, deepest = 0
    for t in range(n_trees):
        if depths[t] > deepest:
            deepest = depths[t]
    cdef PathElement* buf = <PathElement*> malloc(
        sizeof(PathElement) * ((deepest + 2) * (deepest + 3) // 2 + 1))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for t in range(n_trees):
                a = offsets[t]
                if offsets[t + 1] - a == 1:
                    continue
                for r in range(n_rows):
                    shap_recurse(&left[a], &right[a], &feature[a], &threshold[a], &value[a],
                                 &cover[a], &X[r, 0], &phi[r, 0], scale, 0, buf, 0,
                                 1.0, 1.0, -1)
    finally:
        free(buf)
    return phi_arr
