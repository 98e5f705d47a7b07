"""Procedural point-cloud shapes for tests and benchmarks.

All generators jitter-sample shape surfaces with a seeded generator, so
clouds are deterministic per (kind, n_points, seed) and free of the exact
coordinate ties a regular grid would produce. The l-bracket, stepped-block,
and notched-cylinder kinds have no rotational symmetry, which keeps
ground-truth rotation recovery well-posed; cube and plane are symmetric
reference shapes for geometry tests.

The box kinds finish with a seeded low-frequency sinusoidal displacement:
perfectly flat faces and straight edges are translationally self-similar,
so distinct points can share identical local neighborhoods and
correspondence by local features is ill-posed; the modulation gives every
neighborhood a distinct curvature signature while leaving the overall
shape and its asymmetry intact. The cylinder instead carries a shallow
azimuthal ripple plus a few dimples of distinct size and depth, so its
wall mixes repeating relief with unique landmarks.

Asymmetric kinds are emitted at SHAPE_SCALE so that the unit-magnitude
translations and noise used by the evaluation harness stay small relative
to the shape itself.
"""

from __future__ import annotations

import numpy as np

from .geometry import PointCloud

__all__ = ["SHAPE_KINDS", "ASYMMETRIC_KINDS", "generate_shape", "synthetic_suite"]

SHAPE_KINDS = ("l-bracket", "stepped-block", "notched-cylinder", "cube", "plane")
ASYMMETRIC_KINDS = ("l-bracket", "stepped-block", "notched-cylinder")

SHAPE_SCALE = 16.0

_L_BRACKET_BOXES = (
    ((0.0, 0.0, 0.0), (0.3, 1.0, 0.25)),
    ((0.0, 0.0, 0.0), (0.85, 0.35, 0.25)),
)
_STEPPED_BOXES = (
    ((0.0, 0.0, 0.0), (1.0, 0.8, 0.25)),
    ((0.0, 0.0, 0.24), (0.7, 0.55, 0.5)),
    ((0.0, 0.0, 0.49), (0.4, 0.3, 0.75)),
)
WARP_AMPLITUDE = 0.08
WARP_WAVES = 5

# Cylinder profile: radius tapers linearly from _RADIUS_BOTTOM at z=0 to
# _RADIUS_TOP at z=1; a sector notch of width _NOTCH_WIDTH rad is cut above
# _NOTCH_Z; rim corners are rounded by a quarter-circle fillet.
_RADIUS_BOTTOM = 0.45
_RADIUS_TOP = 0.30
_NOTCH_WIDTH = 0.35
_NOTCH_Z = 0.75
_RIM_FILLET = 0.25

# Wall relief: a ripple of _RIPPLE_COUNT crests around the azimuth, its
# depth modulated by a smooth envelope, plus a one-cycle radial drift.
_RIPPLE_COUNT = 13
_RIPPLE_DEPTH = 0.05
_RIPPLE_ENVELOPE = (0.10, 0.05)
_DRIFT_DEPTH = 0.01

# Dimple landmarks: (azimuth, z center, angular radius, depth) of radial
# depressions pressed into the wall. Depths and sizes all differ, so each
# dimple rim has a curvature signature unlike any other neighborhood.
_DIMPLES = (
    (0.7, 0.35, 0.30, 0.10),
    (1.9, 0.70, 0.25, 0.13),
    (3.4, 0.50, 0.35, 0.08),
    (5.3, 0.25, 0.28, 0.12),
)


def _smooth_warp(pts: np.ndarray, rng) -> np.ndarray:
    """Displace points along seeded low-frequency plane waves.

    Each wave shifts every point along a random direction by a sinusoid of
    the point's base position, with wavelengths of roughly half the shape
    extent. Total displacement stays near WARP_AMPLITUDE of the extent:
    large enough that no two neighborhoods repeat, small enough that the
    underlying shape stays recognizable.
    """
    extent = float(np.ptp(pts, axis=0).max())
    amplitude = WARP_AMPLITUDE * extent / np.sqrt(WARP_WAVES)
    out = pts.copy()
    for _ in range(WARP_WAVES):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        normal = rng.normal(size=3)
        normal /= np.linalg.norm(normal)
        wave = 2.0 * np.pi / (rng.uniform(0.35, 0.8) * extent) * normal
        phase = rng.uniform(0.0, 2.0 * np.pi)
        out += amplitude * np.sin(pts @ wave + phase)[:, None] * direction
    return out


def _box_surface_samples(lo, hi, n: int, rng) -> np.ndarray:
    """n points uniform on the surface of an axis-aligned box."""
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    ext = hi - lo
    areas = np.array([ext[1] * ext[2], ext[1] * ext[2],
                      ext[0] * ext[2], ext[0] * ext[2],
                      ext[0] * ext[1], ext[0] * ext[1]])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    pts = lo + rng.random((n, 3)) * ext
    axis = face // 2
    side = face % 2
    pts[np.arange(n), axis] = np.where(side == 0, lo[axis], hi[axis])
    return pts


def _inside_any(pts: np.ndarray, boxes, skip: int) -> np.ndarray:
    """True where a point lies strictly inside any box other than boxes[skip]."""
    inside = np.zeros(pts.shape[0], dtype=bool)
    for j, (lo, hi) in enumerate(boxes):
        if j == skip:
            continue
        lo = np.asarray(lo)
        hi = np.asarray(hi)
        inside |= np.all((pts > lo) & (pts < hi), axis=1)
    return inside


def _box_union_surface(boxes, n: int, rng) -> np.ndarray:
    """n points on the outer surface of a union of overlapping boxes."""
    areas = []
    for lo, hi in boxes:
        e = np.asarray(hi) - np.asarray(lo)
        areas.append(2.0 * (e[0] * e[1] + e[1] * e[2] + e[0] * e[2]))
    weights = np.asarray(areas) / sum(areas)
    chunks = []
    have = 0
    while have < n:
        want = max(n - have, 64)
        counts = rng.multinomial(want, weights)
        for j, c in enumerate(counts):
            if c == 0:
                continue
            pts = _box_surface_samples(*boxes[j], c, rng)
            pts = pts[~_inside_any(pts, boxes, j)]
            chunks.append(pts)
            have += pts.shape[0]
    return np.vstack(chunks)[:n]


def _plane(n: int, rng) -> np.ndarray:
    pts = np.zeros((n, 3))
    pts[:, :2] = rng.uniform(-0.5, 0.5, size=(n, 2))
    return pts


def _cube(n: int, rng) -> np.ndarray:
    return _box_surface_samples((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5), n, rng)


def _notched_cylinder(n: int, rng) -> np.ndarray:
    """Tapering cylinder with a sector notch, rippled wall, and dimples.

    Sampled patches: side wall (minus the notch opening), bottom cap, top
    cap minus the notch sector, notch floor, and the two flat notch walls.
    Points near the rims are projected onto quarter-circle fillets, then
    the radial field applies the azimuthal ripple, envelope, drift, and
    the dimple depressions.
    """
    r0, r1 = _RADIUS_BOTTOM, _RADIUS_TOP
    z_notch, th_notch = _NOTCH_Z, _NOTCH_WIDTH

    def radius(z):
        return r0 + (r1 - r0) * z

    r_floor = radius(z_notch)
    areas = np.array([
        2 * np.pi * 0.5 * (r0 + r1)
        - th_notch * 0.5 * (r_floor + r1) * (1 - z_notch),  # side wall
        np.pi * r0 ** 2,                                    # bottom cap
        (np.pi - th_notch / 2) * r1 ** 2,                   # top cap minus sector
        0.5 * th_notch * r_floor ** 2,                      # notch floor sector
        (1 - z_notch) * (r_floor + r1),                     # two notch walls
    ])
    patch = rng.choice(5, size=n, p=areas / areas.sum())
    pts = np.empty((n, 3))
    for i, p in enumerate(patch):
        if p == 0:
            while True:
                z = rng.random()
                th = rng.uniform(0.0, 2 * np.pi)
                if z <= z_notch or th >= th_notch:
                    break
            r = radius(z)
            pts[i] = (r * np.cos(th), r * np.sin(th), z)
        elif p == 1:
            th = rng.uniform(0.0, 2 * np.pi)
            r = r0 * np.sqrt(rng.random())
            pts[i] = (r * np.cos(th), r * np.sin(th), 0.0)
        elif p == 2:
            th = rng.uniform(th_notch, 2 * np.pi)
            r = r1 * np.sqrt(rng.random())
            pts[i] = (r * np.cos(th), r * np.sin(th), 1.0)
        elif p == 3:
            th = rng.uniform(0.0, th_notch)
            r = r_floor * np.sqrt(rng.random())
            pts[i] = (r * np.cos(th), r * np.sin(th), z_notch)
        else:
            th = 0.0 if rng.random() < 0.5 else th_notch
            z = rng.uniform(z_notch, 1.0)
            r = radius(z) * rng.random()
            pts[i] = (r * np.cos(th), r * np.sin(th), z)

    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    rho = np.hypot(x, y)
    for corner_r, corner_z, zsign in ((r1, 1.0, 1.0), (r0, 0.0, -1.0)):
        fil = _RIM_FILLET * corner_r
        cr, cz = corner_r - fil, corner_z - zsign * fil
        near = ((rho > cr) & (zsign * (z - cz) > 0.0)
                & (np.hypot(rho - cr, z - cz) > 1e-12))
        d = np.hypot(rho[near] - cr, z[near] - cz)
        rho_f = cr + (rho[near] - cr) * fil / d
        z_f = cz + (z[near] - cz) * fil / d
        scale_r = np.where(rho[near] > 1e-12, rho_f / rho[near], 1.0)
        x[near] *= scale_r
        y[near] *= scale_r
        z[near] = z_f
        rho = np.hypot(x, y)

    th = np.arctan2(y, x)
    ph_env, ph_env3, ph_ripple, ph_drift = rng.uniform(0.0, 2.0 * np.pi, 4)
    envelope = (1.0 + _RIPPLE_ENVELOPE[0] * np.sin(th + ph_env)
                + _RIPPLE_ENVELOPE[1] * np.sin(3.0 * th + ph_env3))
    field = (1.0 + _RIPPLE_DEPTH * envelope * np.cos(_RIPPLE_COUNT * th + ph_ripple)
             + _DRIFT_DEPTH * np.sin(th + ph_drift))
    for az, z_c, ang_r, depth in _DIMPLES:
        dist = np.hypot(np.arctan2(np.sin(th - az), np.cos(th - az)),
                        (z - z_c) / _RADIUS_BOTTOM)
        inside = dist < ang_r
        field = np.where(
            inside, field - depth * np.cos(0.5 * np.pi * dist / ang_r) ** 2, field)
    return np.column_stack([x * field, y * field, z])


def generate_shape(kind: str, n_points: int, seed: int) -> PointCloud:
    """Deterministic jittered surface sampling of a parametric shape."""
    if kind not in SHAPE_KINDS:
        raise ValueError(f"unknown shape kind {kind!r}; choose from {SHAPE_KINDS}")
    if n_points < 64:
        raise ValueError(f"n_points must be at least 64, got {n_points}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    if kind == "plane":
        pts = _plane(n_points, rng)
    elif kind == "cube":
        pts = _cube(n_points, rng)
    elif kind == "l-bracket":
        pts = _box_union_surface(_L_BRACKET_BOXES, n_points, rng)
        pts = (_smooth_warp(pts, rng) - np.array([0.425, 0.5, 0.125])) * SHAPE_SCALE
    elif kind == "stepped-block":
        pts = _box_union_surface(_STEPPED_BOXES, n_points, rng)
        pts = (_smooth_warp(pts, rng) - np.array([0.5, 0.4, 0.375])) * SHAPE_SCALE
    else:
        pts = _notched_cylinder(n_points, rng)
        pts = (pts - pts.mean(axis=0)) * SHAPE_SCALE
    return PointCloud(pts)


def synthetic_suite(n_shapes: int = 20, seed: int = 2024, n_min: int = 512,
                    n_max: int = 1024):
    """Asymmetric shape clouds for benchmarks.

    Mostly notched-cylinder clouds, with one l-bracket and one
    stepped-block mixed in at fixed slots per block of twenty.
    """
    if n_shapes < 1:
        raise ValueError("n_shapes must be positive")
    master = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    clouds = []
    for i in range(n_shapes):
        slot = i % 20
        if slot == 7:
            kind = "l-bracket"
        elif slot == 15:
            kind = "stepped-block"
        else:
            kind = "notched-cylinder"
        n = int(master.integers(n_min, n_max + 1))
        clouds.append(generate_shape(kind, n, seed=int(master.integers(0, 2 ** 32))))
    return clouds
