"""Numba-compiled hot kernels.

Same contracts as numpy_impl: ascending squared distance, lower index wins
ties, identical octant layout. fastmath stays off so distance arithmetic
matches the numpy backend bit-for-bit on 3-vectors.
"""

import numpy as np
from numba import njit

BACKEND_NAME = "numba"


@njit(cache=True)
def knn(points, queries, k):
    n = points.shape[0]
    q = queries.shape[0]
    d = points.shape[1]
    out = np.empty((q, k), dtype=np.int64)
    dist_buf = np.empty(k, dtype=np.float64)
    for qi in range(q):
        size = 0
        for i in range(n):
            d2 = 0.0
            for j in range(d):
                diff = queries[qi, j] - points[i, j]
                d2 += diff * diff
            if size < k:
                pos = size
                while pos > 0 and dist_buf[pos - 1] > d2:
                    dist_buf[pos] = dist_buf[pos - 1]
                    out[qi, pos] = out[qi, pos - 1]
                    pos -= 1
                dist_buf[pos] = d2
                out[qi, pos] = i
                size += 1
            elif d2 < dist_buf[k - 1]:
                # strict < keeps earlier (lower) indices in place on ties
                pos = k - 1
                while pos > 0 and dist_buf[pos - 1] > d2:
                    dist_buf[pos] = dist_buf[pos - 1]
                    out[qi, pos] = out[qi, pos - 1]
                    pos -= 1
                dist_buf[pos] = d2
                out[qi, pos] = i
    return out


@njit(cache=True)
def farthest_point_indices(points, m, start):
    n = points.shape[0]
    d = points.shape[1]
    out = np.empty(m, dtype=np.int64)
    out[0] = start
    selected = np.zeros(n, dtype=np.bool_)
    selected[start] = True
    mind2 = np.empty(n, dtype=np.float64)
    for i in range(n):
        acc = 0.0
        for j in range(d):
            diff = points[i, j] - points[start, j]
            acc += diff * diff
        mind2[i] = acc
    for s in range(1, m):
        best = -1.0
        nxt = -1
        for i in range(n):
            if not selected[i] and mind2[i] > best:
                best = mind2[i]
                nxt = i
        out[s] = nxt
        selected[nxt] = True
        for i in range(n):
            acc = 0.0
            for j in range(d):
                diff = points[i, j] - points[nxt, j]
                acc += diff * diff
            if acc < mind2[i]:
                mind2[i] = acc
    return out


@njit(cache=True)
def octant_pool_batch(coords, attrs, centers, neigh, relative):
    m = centers.shape[0]
    k = neigh.shape[1]
    c = attrs.shape[1]
    out = np.zeros((m, 8 * c), dtype=np.float64)
    counts = np.empty(8, dtype=np.int64)
    for ci in range(m):
        center = centers[ci]
        for o in range(8):
            counts[o] = 0
        for ni in range(k):
            nb = neigh[ci, ni]
            oct_id = 0
            if coords[nb, 0] - coords[center, 0] < 0.0:
                oct_id += 4
            if coords[nb, 1] - coords[center, 1] < 0.0:
                oct_id += 2
            if coords[nb, 2] - coords[center, 2] < 0.0:
                oct_id += 1
            counts[oct_id] += 1
            base = oct_id * c
            if relative:
                for ai in range(c):
                    out[ci, base + ai] += attrs[nb, ai] - attrs[center, ai]
            else:
                for ai in range(c):
                    out[ci, base + ai] += attrs[nb, ai]
        for o in range(8):
            if counts[o] > 1:
                base = o * c
                inv = 1.0 / counts[o]
                for ai in range(c):
                    out[ci, base + ai] *= inv
    return out
