"""Shared test helpers: seeded random geometry and brute-force oracles."""

from __future__ import annotations

import numpy as np
import pytest

from spa.geometry import PointCloud, RigidTransform


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random proper rotation via QR with sign fixing."""
    a = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(a)
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q


def random_transform(rng: np.random.Generator, t_scale: float = 1.0) -> RigidTransform:
    return RigidTransform(random_rotation(rng), rng.uniform(-t_scale, t_scale, size=3))


def random_cloud(rng: np.random.Generator, n: int) -> PointCloud:
    return PointCloud(rng.normal(size=(n, 3)))


def brute_knn(points: np.ndarray, query: np.ndarray, k: int) -> np.ndarray:
    d2 = ((points - query) ** 2).sum(axis=1)
    return np.argsort(d2, kind="stable")[:k]


def brute_fps(points: np.ndarray, m: int, start: int = 0) -> np.ndarray:
    chosen = [start]
    mind2 = ((points - points[start]) ** 2).sum(axis=1)
    for _ in range(m - 1):
        mind2[chosen] = -np.inf
        nxt = int(np.argmax(mind2))
        chosen.append(nxt)
        mind2 = np.minimum(mind2, ((points - points[nxt]) ** 2).sum(axis=1))
    return np.array(chosen)


def brute_octant_pool(points, attrs, center_idx, neighbor_idx, relative):
    """Reference octant mean-pooling for one center point."""
    c = points[center_idx]
    n_attr = attrs.shape[1]
    out = np.zeros((8, n_attr))
    counts = np.zeros(8, dtype=int)
    for j in neighbor_idx:
        rel = points[j] - c
        o = 4 * (rel[0] < 0) + 2 * (rel[1] < 0) + (rel[2] < 0)
        a = attrs[j] - attrs[center_idx] if relative else attrs[j]
        out[o] += a
        counts[o] += 1
    nz = counts > 0
    out[nz] /= counts[nz, None]
    return out.reshape(-1)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
