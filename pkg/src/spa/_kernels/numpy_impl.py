"""Pure-numpy implementations of the hot kernels.

Reference semantics for the numba backend: identical tie-breaking (lower
index wins on equal distance) and identical octant layout. Distances are
squared Euclidean throughout; callers take roots if they need them.
"""

import numpy as np

BACKEND_NAME = "numpy"

_CHUNK = 256  # query rows per distance block, caps peak memory


def _sq_dists(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    diff = queries[:, None, :] - points[None, :, :]
    return np.einsum("qnd,qnd->qn", diff, diff)


def knn(points: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """k nearest rows of `points` for each row of `queries`.

    Returns an (Q, k) int64 array ordered by ascending squared distance,
    ties broken by lower point index.
    """
    n = points.shape[0]
    q = queries.shape[0]
    out = np.empty((q, k), dtype=np.int64)
    for lo in range(0, q, _CHUNK):
        hi = min(lo + _CHUNK, q)
        d2 = _sq_dists(queries[lo:hi], points)
        if k == 1:
            out[lo:hi, 0] = np.argmin(d2, axis=1)  # first occurrence wins ties
        elif k >= n:
            out[lo:hi] = np.argsort(d2, axis=1, kind="stable")
        else:
            out[lo:hi] = _knn_rows(d2, k)
    return out


def _knn_rows(d2: np.ndarray, k: int) -> np.ndarray:
    # argpartition is tie-oblivious at the k-th boundary; detect rows where
    # ties straddle it and redo those with a stable full sort.
    rows = np.arange(d2.shape[0])[:, None]
    part = np.argpartition(d2, k - 1, axis=1)[:, :k]
    sub = d2[rows, part]
    order = np.lexsort((part, sub), axis=1)
    sel = part[rows, order]
    kth = d2[rows[:, 0], sel[:, -1]]
    ambiguous = (d2 <= kth[:, None]).sum(axis=1) > k
    if np.any(ambiguous):
        full = np.argsort(d2[ambiguous], axis=1, kind="stable")[:, :k]
        sel[ambiguous] = full
    return sel.astype(np.int64)


def farthest_point_indices(points: np.ndarray, m: int, start: int) -> np.ndarray:
    """Greedy maximin subset of `m` row indices, seeded at `start`.

    Each step picks the unselected point maximizing the minimum squared
    distance to the selection so far; ties go to the lower index.
    """
    n = points.shape[0]
    out = np.empty(m, dtype=np.int64)
    out[0] = start
    selected = np.zeros(n, dtype=bool)
    selected[start] = True
    diff = points - points[start]
    mind2 = np.einsum("nd,nd->n", diff, diff)
    for i in range(1, m):
        cand = np.where(selected, -np.inf, mind2)
        nxt = int(np.argmax(cand))  # argmax returns the first (lowest) index on ties
        out[i] = nxt
        selected[nxt] = True
        diff = points - points[nxt]
        np.minimum(mind2, np.einsum("nd,nd->n", diff, diff), out=mind2)
    return out


def octant_pool_batch(
    coords: np.ndarray,
    attrs: np.ndarray,
    centers: np.ndarray,
    neigh: np.ndarray,
    relative: bool,
) -> np.ndarray:
    """Mean attribute per sign-octant of each center's neighborhood.

    Octant of a neighbor is determined by the signs of its coordinates
    relative to the center; a zero coordinate counts as positive. Octant
    order is (+++), (++-), (+-+), (+--), (-++), (-+-), (--+), (---), i.e.
    index = 4*(x<0) + 2*(y<0) + (z<0). Empty octants contribute zeros.
    With `relative`, the pooled attribute of a neighbor is attrs[n] -
    attrs[center] (used when attributes are the coordinates themselves).
    """
    rel = coords[neigh] - coords[centers][:, None, :]  # (M, k, 3)
    oct_id = (
        4 * (rel[:, :, 0] < 0.0).astype(np.int64)
        + 2 * (rel[:, :, 1] < 0.0).astype(np.int64)
        + (rel[:, :, 2] < 0.0).astype(np.int64)
    )
    a = attrs[neigh]  # (M, k, C)
    if relative:
        a = a - attrs[centers][:, None, :]
    onehot = oct_id[:, :, None] == np.arange(8)[None, None, :]  # (M, k, 8)
    counts = onehot.sum(axis=1)  # (M, 8)
    sums = np.einsum("mko,mkc->moc", onehot.astype(np.float64), a)
    pooled = sums / np.maximum(counts, 1)[:, :, None]
    m, c = centers.shape[0], attrs.shape[1]
    return pooled.reshape(m, 8 * c)
