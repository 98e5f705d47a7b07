"""Per-point curvature energy from local PCA and salient-point selection.

Each point's energy is the smallest eigenvalue of the covariance of its k
nearest neighbors' coordinates (the point itself included). Flat regions
score near zero; edges and corners score high. Selection keeps the spread
of farthest-point sampling while restricting candidates to the
highest-energy fraction of the cloud.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from . import _kernels
from .geometry import PointCloud

__all__ = [
    "SaliencyField",
    "SalientSet",
    "local_curvature_energies",
    "select_salient_points",
]


@dataclass(frozen=True)
class SaliencyField:
    """Smallest local-PCA eigenvalue per point, with the k used to compute it."""

    lambdas: np.ndarray
    k_neighbors: int

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=np.float64)
        if lam.ndim != 1 or lam.shape[0] < 1:
            raise ValueError(f"lambdas must be a nonempty 1-D array, got shape {lam.shape}")
        if np.any(lam < -1e-12) or not np.all(np.isfinite(lam)):
            raise ValueError("lambdas must be finite and nonnegative (within round-off)")
        lam = np.maximum(lam, 0.0)
        lam.flags.writeable = False
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "k_neighbors", int(self.k_neighbors))

    @property
    def n(self) -> int:
        return self.lambdas.shape[0]


@dataclass(frozen=True)
class SalientSet:
    """Ordered salient point indices and their curvature energies."""

    indices: np.ndarray
    lambdas: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        lam = np.asarray(self.lambdas, dtype=np.float64)
        if idx.ndim != 1 or idx.shape != lam.shape or idx.shape[0] < 1:
            raise ValueError("indices and lambdas must be matching nonempty 1-D arrays")
        if np.unique(idx).shape[0] != idx.shape[0]:
            raise ValueError("salient indices must be distinct")
        idx.flags.writeable = False
        lam.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "lambdas", lam)

    @property
    def m(self) -> int:
        return self.indices.shape[0]


def local_curvature_energies(cloud: PointCloud, k: int = 32) -> SaliencyField:
    """Smallest eigenvalue of each point's k-neighborhood covariance.

    The covariance is normalized by k and the neighborhood includes the
    point itself. Round-off negatives are clamped to zero.
    """
    if not (3 <= k <= cloud.n):
        raise ValueError(f"k must be in [3, {cloud.n}], got {k}")
    pts = cloud.points
    neigh = _kernels.knn(pts, pts, k)
    local = pts[neigh]
    centered = local - local.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    eig = np.linalg.eigvalsh(cov)
    return SaliencyField(np.maximum(eig[:, 0], 0.0), k)


def select_salient_points(
    cloud: PointCloud,
    field: SaliencyField,
    m: int,
    pool_fraction: float = 0.25,
) -> SalientSet:
    """Pick m spread-out indices from the highest-energy fraction of the cloud.

    The candidate pool is the ceil(pool_fraction * N) points with the largest
    energies (pool-membership ties resolved toward the lower index). The first
    selection is the global energy argmax; the rest follow greedy maximin
    distance restricted to the pool.
    """
    n = cloud.n
    if field.n != n:
        raise ValueError(f"field covers {field.n} points but cloud has {n}")
    if not (1 <= m <= n):
        raise ValueError(f"m must be in [1, {n}], got {m}")
    if not (0.0 < pool_fraction <= 1.0):
        raise ValueError(f"pool_fraction must be in (0, 1], got {pool_fraction}")
    pool_size = ceil(pool_fraction * n)
    if pool_size < m:
        raise ValueError(
            f"candidate pool of {pool_size} points (pool_fraction={pool_fraction}, "
            f"N={n}) cannot supply m={m} salient points; raise pool_fraction or lower m"
        )
    lam = field.lambdas
    # argsort on (-lambda, index): stable sort already breaks ties by index
    order = np.argsort(-lam, kind="stable")
    pool = np.sort(order[:pool_size])
    start_global = int(order[0])
    start_in_pool = int(np.searchsorted(pool, start_global))
    picked = _kernels.farthest_point_indices(cloud.points[pool], m, start_in_pool)
    chosen = pool[picked]
    return SalientSet(chosen, lam[chosen])
