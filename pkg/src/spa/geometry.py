"""Point-cloud container, spatial queries, sampling, and rigid-transform algebra.

Conventions used throughout the package:
  * coordinates are float64, shape (N, 3), index order is significant;
  * rotations are proper (orthonormal, det +1) 3x3 matrices;
  * Euler angles are degrees about the fixed X, Y, Z axes applied in that
    order (extrinsic), i.e. R = Rz @ Ry @ Rx;
  * nearest-neighbor and maximin ties break toward the lower point index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

__all__ = [
    "PointCloud",
    "RigidTransform",
    "NeighborIndex",
    "EulerAngles",
    "build_neighbor_index",
    "knn",
    "knn_batch",
    "farthest_point_sample",
    "apply_transform",
    "compose",
    "invert",
    "euler_to_rotation",
    "rotation_to_euler",
    "rotation_angle_deg",
    "wrap_angle_deg",
]

ORTHONORMAL_TOL = 1e-9
GIMBAL_MARGIN_DEG = 0.1


def _as_points(points) -> np.ndarray:
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
    if pts.shape[0] < 1:
        raise ValueError("point cloud must contain at least one point")
    if not np.all(np.isfinite(pts)):
        raise ValueError("point cloud contains non-finite coordinates")
    return pts


@dataclass(frozen=True)
class PointCloud:
    """Immutable ordered set of 3D points."""

    points: np.ndarray

    def __post_init__(self):
        pts = _as_points(self.points)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]


def _check_rotation(rotation: np.ndarray) -> np.ndarray:
    r = np.asarray(rotation, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError("rotation contains non-finite entries")
    err = np.abs(r.T @ r - np.eye(3)).max()
    if err > ORTHONORMAL_TOL:
        raise ValueError(f"rotation is not orthonormal (max |R^T R - I| = {err:.3e})")
    det = float(np.linalg.det(r))
    if abs(det - 1.0) > ORTHONORMAL_TOL:
        raise ValueError(f"rotation determinant must be +1, got {det!r}")
    return r


@dataclass(frozen=True)
class RigidTransform:
    """Rotation plus translation; maps p to rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _check_rotation(self.rotation)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation contains non-finite entries")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class EulerAngles:
    """Rotation angles in degrees about the X, Y, Z axes, each in (-180, 180]."""

    rx: float
    ry: float
    rz: float

    def __post_init__(self):
        for name, value in (("rx", self.rx), ("ry", self.ry), ("rz", self.rz)):
            v = float(value)
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite")
            if not (-180.0 < v <= 180.0):
                raise ValueError(f"{name} must lie in (-180, 180], got {v}")
            object.__setattr__(self, name, v)

    def as_array(self) -> np.ndarray:
        return np.array([self.rx, self.ry, self.rz])


@dataclass(frozen=True)
class NeighborIndex:
    """Snapshot of a cloud's coordinates answering exact kNN queries."""

    points: np.ndarray

    def __post_init__(self):
        pts = _as_points(self.points).copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]


def build_neighbor_index(cloud: PointCloud) -> NeighborIndex:
    return NeighborIndex(cloud.points)


def knn(index: NeighborIndex, query, k: int) -> np.ndarray:
    """Indices of the k nearest indexed points to `query`, ascending distance."""
    q = np.asarray(query, dtype=np.float64).reshape(1, 3)
    if not (1 <= k <= index.n):
        raise ValueError(f"k must be in [1, {index.n}], got {k}")
    return _kernels.knn(index.points, q, k)[0]


def knn_batch(index: NeighborIndex, queries, k: int) -> np.ndarray:
    """Vectorized knn: one row of k indices per query row."""
    q = np.ascontiguousarray(queries, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != 3:
        raise ValueError(f"queries must have shape (Q, 3), got {q.shape}")
    if not (1 <= k <= index.n):
        raise ValueError(f"k must be in [1, {index.n}], got {k}")
    return _kernels.knn(index.points, q, k)


def farthest_point_sample(cloud: PointCloud, m: int, start: int = 0) -> np.ndarray:
    """Greedy maximin sample of m point indices, beginning at `start`."""
    if not (1 <= m <= cloud.n):
        raise ValueError(f"m must be in [1, {cloud.n}], got {m}")
    if not (0 <= start < cloud.n):
        raise ValueError(f"start must be a valid point index, got {start}")
    return _kernels.farthest_point_indices(cloud.points, m, start)


def apply_transform(cloud: PointCloud, t: RigidTransform) -> PointCloud:
    return PointCloud(cloud.points @ t.rotation.T + t.translation)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform equivalent to applying b first, then a."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


def euler_to_rotation(e: EulerAngles) -> np.ndarray:
    rx, ry, rz = np.radians([e.rx, e.ry, e.rz])
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    mx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    my = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    mz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    return mz @ my @ mx


def wrap_angle_deg(deg):
    """Wrap angles (scalar or array, degrees) into (-180, 180]."""
    return 180.0 - np.mod(180.0 - np.asarray(deg, dtype=np.float64), 360.0)


def rotation_to_euler(r) -> EulerAngles:
    """Euler angles (degrees) of a proper rotation under the fixed X->Y->Z order.

    Near ry = +/-90 deg the X and Z rotations become degenerate; within
    0.1 deg of the singularity rx is pinned to 0 and the residual angle
    is absorbed into rz.
    """
    rm = _check_rotation(r)
    sy = float(np.clip(-rm[2, 0], -1.0, 1.0))
    ry = float(np.degrees(np.arcsin(sy)))
    if 90.0 - abs(ry) < GIMBAL_MARGIN_DEG:
        rz = float(np.degrees(np.arctan2(-rm[0, 1], rm[1, 1])))
        return EulerAngles(0.0, ry, float(wrap_angle_deg(rz)))
    rx = float(np.degrees(np.arctan2(rm[2, 1], rm[2, 2])))
    rz = float(np.degrees(np.arctan2(rm[1, 0], rm[0, 0])))
    return EulerAngles(float(wrap_angle_deg(rx)), ry, float(wrap_angle_deg(rz)))


def rotation_angle_deg(r: np.ndarray) -> float:
    """Magnitude in degrees of the rotation encoded by a 3x3 matrix."""
    c = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.degrees(np.arccos(c)))
