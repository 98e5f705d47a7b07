"""Feature-space matching, closed-form rigid estimation, and iterative alignment.

The estimator solves the orthogonal Procrustes problem over matched pairs:
centroids are removed, the cross-covariance (a plain sum over pairs) is
decomposed by SVD, and the smallest singular direction is sign-corrected so
the rotation is always proper. The fitted map sends target-side positions
onto source-side positions; callers invert it to move the source.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError
from .features import FeatureExtractor, FeatureMatrix, extract_features
from .geometry import (
    PointCloud,
    RigidTransform,
    apply_transform,
    compose,
    farthest_point_sample,
    invert,
    rotation_angle_deg,
)
from .saliency import local_curvature_energies, select_salient_points

__all__ = [
    "CorrespondenceSet",
    "IterationRecord",
    "RegistrationResult",
    "match_correspondences",
    "estimate_transform_svd",
    "register_spa",
    "register_icp",
    "residual_mse",
]

RANK_DEFICIENT_TOL = 1e-12
CONVERGED_ANGLE_DEG = 0.01
CONVERGED_TRANSLATION = 1e-5
SELECTION_STRATEGIES = ("salient", "random", "fps")


@dataclass(frozen=True)
class CorrespondenceSet:
    """Matched (target, source) point pairs with their 3D positions."""

    target_indices: np.ndarray
    source_indices: np.ndarray
    target_positions: np.ndarray
    source_positions: np.ndarray

    def __post_init__(self):
        ti = np.asarray(self.target_indices, dtype=np.int64)
        si = np.asarray(self.source_indices, dtype=np.int64)
        tp = np.asarray(self.target_positions, dtype=np.float64)
        sp = np.asarray(self.source_positions, dtype=np.float64)
        m = ti.shape[0]
        if ti.ndim != 1 or si.shape != (m,) or tp.shape != (m, 3) or sp.shape != (m, 3):
            raise ValueError("correspondence arrays must share length and be (m,) / (m, 3)")
        if m < 1:
            raise ValueError("correspondence set must contain at least one pair")
        if np.unique(ti).shape[0] != m:
            raise ValueError("target indices must be distinct")
        for a in (ti, si, tp, sp):
            a.flags.writeable = False
        object.__setattr__(self, "target_indices", ti)
        object.__setattr__(self, "source_indices", si)
        object.__setattr__(self, "target_positions", tp)
        object.__setattr__(self, "source_positions", sp)

    @property
    def m(self) -> int:
        return self.target_indices.shape[0]


@dataclass(frozen=True)
class IterationRecord:
    """One alignment step: the applied increment and the post-fit pair RMSE."""

    increment: RigidTransform
    residual_rmse: float


@dataclass(frozen=True)
class RegistrationResult:
    """Accumulated source-to-target transform plus the per-iteration trail."""

    transform: RigidTransform
    per_iteration: tuple
    iterations_run: int
    converged: bool
    flagged: bool
    flag_reason: str

    def __post_init__(self):
        object.__setattr__(self, "per_iteration", tuple(self.per_iteration))
        if self.iterations_run != len(self.per_iteration):
            raise ValueError("iterations_run must equal the per-iteration record count")


def match_correspondences(
    target_rows,
    source_rows,
    target_positions,
    source_positions,
    target_indices=None,
    source_indices=None,
) -> CorrespondenceSet:
    """Pair each target row with its nearest source row in feature space.

    Ties break toward the lower source row; source rows may be matched more
    than once. Index arrays default to row positions.
    """
    tf = np.asarray(target_rows, dtype=np.float64)
    sf = np.asarray(source_rows, dtype=np.float64)
    if tf.ndim != 2 or sf.ndim != 2:
        raise ValueError("feature rows must be 2-D arrays")
    if tf.shape[1] != sf.shape[1]:
        raise ValueError(f"feature width mismatch: {tf.shape[1]} vs {sf.shape[1]}")
    tp = np.asarray(target_positions, dtype=np.float64)
    sp = np.asarray(source_positions, dtype=np.float64)
    if tp.shape != (tf.shape[0], 3) or sp.shape != (sf.shape[0], 3):
        raise ValueError("positions must be (rows, 3) matching the feature arrays")
    ti = np.arange(tf.shape[0]) if target_indices is None else np.asarray(target_indices)
    si = np.arange(sf.shape[0]) if source_indices is None else np.asarray(source_indices)

    # argmin returns the first (lowest) index on exact ties
    d2 = ((tf[:, None, :] - sf[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)
    return CorrespondenceSet(ti, si[nearest], tp, sp[nearest])


def _estimate_from_positions(x: np.ndarray, y: np.ndarray) -> RigidTransform:
    """Closed-form proper rigid map sending x positions onto y positions."""
    if x.shape[0] < 3:
        raise DegenerateGeometryError(
            f"need at least 3 correspondence pairs, got {x.shape[0]}"
        )
    x_bar = x.mean(axis=0)
    y_bar = y.mean(axis=0)
    cov = (x - x_bar).T @ (y - y_bar)
    u, s, vt = np.linalg.svd(cov)
    if s[1] < RANK_DEFICIENT_TOL and s[2] < RANK_DEFICIENT_TOL:
        raise DegenerateGeometryError(
            "correspondence geometry is rank-deficient (collinear or coincident points)"
        )
    v = vt.T
    d = np.sign(np.linalg.det(v @ u.T))
    r = v @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(r, y_bar - r @ x_bar)


def estimate_transform_svd(pairs: CorrespondenceSet) -> RigidTransform:
    """Optimal rigid map from target-side onto source-side pair positions."""
    return _estimate_from_positions(pairs.target_positions, pairs.source_positions)


def residual_mse(target: PointCloud, source: PointCloud, t: RigidTransform) -> float:
    """Mean squared distance between transformed target points and source points."""
    if target.n != source.n:
        raise ValueError(f"clouds must be index-aligned: {target.n} vs {source.n} points")
    moved = target.points @ t.rotation.T + t.translation
    return float(np.mean(((moved - source.points) ** 2).sum(axis=1)))


def _pair_rmse(x: np.ndarray, y: np.ndarray, t: RigidTransform) -> float:
    moved = x @ t.rotation.T + t.translation
    return float(np.sqrt(np.mean(((moved - y) ** 2).sum(axis=1))))


def _select_indices(
    cloud: PointCloud,
    strategy: str,
    m: int,
    saliency_k: int,
    pool_fraction: float,
    rng,
) -> np.ndarray:
    if strategy == "salient":
        field = local_curvature_energies(cloud, saliency_k)
        return select_salient_points(cloud, field, m, pool_fraction).indices
    if strategy == "fps":
        return farthest_point_sample(cloud, m, start=0)
    if strategy == "random":
        return np.sort(rng.choice(cloud.n, size=m, replace=False))
    raise ValueError(f"unknown selection strategy {strategy!r}; use one of {SELECTION_STRATEGIES}")


def register_spa(
    target: PointCloud,
    source: PointCloud,
    extractor: FeatureExtractor,
    *,
    m_salient: int = 32,
    iterations: int = 10,
    saliency_k: int = 32,
    pool_fraction: float = 0.25,
    selection: str = "salient",
    match_all_source: bool = False,
    selection_seed=None,
) -> RegistrationResult:
    """Iteratively align `source` onto `target` using learned point features.

    Target features and its point selection are computed once; the moving
    source is re-featurized and re-selected every iteration. Each iteration
    matches selected points in feature space, solves for the rigid increment
    in closed form, and applies it to the source. The walk runs to the
    iteration cap unless an increment falls below 0.01 degrees and 1e-5
    translation (convergence) or estimation degenerates; a step whose fitted
    residual exceeds the previous one only flags the result. The returned
    trail is then truncated at the lowest recorded residual, so the transform
    is the composition of exactly the kept increments: the best pose seen.
    """
    if selection not in SELECTION_STRATEGIES:
        raise ValueError(
            f"unknown selection strategy {selection!r}; use one of {SELECTION_STRATEGIES}"
        )
    if iterations < 1:
        raise ValueError(f"iterations must be positive, got {iterations}")
    if not (3 <= m_salient <= min(target.n, source.n)):
        raise ValueError(f"m_salient must be in [3, {min(target.n, source.n)}], got {m_salient}")

    seed_seq = np.random.SeedSequence(selection_seed) if not isinstance(
        selection_seed, np.random.SeedSequence
    ) else selection_seed
    target_rng, source_rng = (np.random.Generator(np.random.PCG64(s))
                              for s in seed_seq.spawn(2))

    target_feats = extract_features(extractor, target)
    target_sel = _select_indices(target, selection, m_salient, saliency_k,
                                 pool_fraction, target_rng)
    target_rows = target_feats.features[target_sel]
    target_pos = target.points[target_sel]

    current = source
    total = RigidTransform.identity()
    records = []
    totals = []
    converged = False
    flagged = False
    reason = ""

    for _ in range(iterations):
        source_feats = extract_features(extractor, current)
        if match_all_source:
            source_sel = np.arange(current.n)
        else:
            source_sel = _select_indices(current, selection, m_salient, saliency_k,
                                         pool_fraction, source_rng)
        corr = match_correspondences(
            target_rows,
            source_feats.features[source_sel],
            target_pos,
            current.points[source_sel],
            target_indices=target_sel,
            source_indices=source_sel,
        )
        try:
            est = estimate_transform_svd(corr)
        except DegenerateGeometryError:
            flagged = True
            reason = "degenerate-estimation"
            break

        rmse = _pair_rmse(corr.target_positions, corr.source_positions, est)
        if records:
            prev = records[-1].residual_rmse
            if rmse > prev + max(1e-12, 1e-9 * prev):
                flagged = True
                reason = reason or "residual-increase"
        increment = invert(est)
        current = apply_transform(current, increment)
        total = compose(increment, total)
        records.append(IterationRecord(increment, rmse))
        totals.append(total)

        if (
            rotation_angle_deg(increment.rotation) < CONVERGED_ANGLE_DEG
            and float(np.linalg.norm(increment.translation)) < CONVERGED_TRANSLATION
        ):
            converged = True
            break

    if records:
        # keep the prefix ending at the lowest residual; later argmin on ties
        # so a converged tail at the floor is never cut
        rmses = np.array([r.residual_rmse for r in records])
        best = int(rmses.shape[0] - 1 - np.argmin(rmses[::-1]))
        converged = converged and best == len(records) - 1
        records = records[: best + 1]
        total = totals[best]

    return RegistrationResult(
        transform=total,
        per_iteration=tuple(records),
        iterations_run=len(records),
        converged=converged,
        flagged=flagged,
        flag_reason=reason,
    )


def register_icp(
    target: PointCloud,
    source: PointCloud,
    *,
    iterations: int = 50,
    tolerance: float = 1e-8,
) -> RegistrationResult:
    """Classic point-to-point alignment of `source` onto `target`.

    Every source point pairs with its nearest target point in 3D; the rigid
    increment comes from the same closed-form estimator. Stops when the
    residual RMSE changes by less than `tolerance` between iterations.
    """
    from . import _kernels

    if iterations < 1:
        raise ValueError(f"iterations must be positive, got {iterations}")
    current = source
    total = RigidTransform.identity()
    records = []
    converged = False
    flagged = False
    reason = ""

    for _ in range(iterations):
        nearest = _kernels.knn(target.points, current.points, 1)[:, 0]
        matched = target.points[nearest]
        try:
            est = _estimate_from_positions(matched, current.points)
        except DegenerateGeometryError:
            flagged = True
            reason = "degenerate-estimation"
            break

        rmse = _pair_rmse(matched, current.points, est)
        increment = invert(est)
        current = apply_transform(current, increment)
        total = compose(increment, total)
        records.append(IterationRecord(increment, rmse))

        if len(records) > 1 and abs(records[-2].residual_rmse - rmse) < tolerance:
            converged = True
            break

    return RegistrationResult(
        transform=total,
        per_iteration=tuple(records),
        iterations_run=len(records),
        converged=converged,
        flagged=flagged,
        flag_reason=reason,
    )
