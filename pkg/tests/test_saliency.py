import numpy as np
import pytest

from spa.geometry import PointCloud, RigidTransform, apply_transform, farthest_point_sample
from spa.saliency import SaliencyField, SalientSet, local_curvature_energies, select_salient_points

from conftest import brute_fps, brute_knn, random_transform


def planar_grid(n_side=3, z=0.0):
    xs, ys = np.meshgrid(np.arange(n_side, dtype=float), np.arange(n_side, dtype=float))
    return PointCloud(np.column_stack([xs.ravel(), ys.ravel(), np.full(n_side * n_side, z)]))


def cube_edge_cloud():
    """Two 6x6 faces meeting at a shared cube edge along y."""
    g = np.linspace(0.0, 1.0, 6)
    uu, vv = np.meshgrid(g, g)
    u, v = uu.ravel(), vv.ravel()
    top = np.column_stack([u, v, np.ones_like(u)])        # z = 1 face
    side = np.column_stack([np.ones_like(u), v, u])       # x = 1 face
    pts = np.vstack([top, side])
    # dedupe the shared edge x=1, z=1 while keeping order
    _, keep = np.unique(np.round(pts, 9), axis=0, return_index=True)
    return PointCloud(pts[np.sort(keep)])


def oracle_lambda(points, i, k):
    neigh = brute_knn(points, points[i], k)
    local = points[neigh]
    centered = local - local.mean(axis=0)
    cov = centered.T @ centered / k
    return max(float(np.linalg.eigvalsh(cov)[0]), 0.0)


class TestLocalCurvatureEnergies:
    def test_planar_grid_all_zero(self):
        pc = planar_grid(3)
        field = local_curvature_energies(pc, k=9)
        assert field.lambdas.max() < 1e-12

    def test_cube_edge_exceeds_face_interior(self):
        pc = cube_edge_cloud()
        field = local_curvature_energies(pc, k=9)
        pts = pc.points
        on_edge = (np.abs(pts[:, 0] - 1) < 1e-9) & (np.abs(pts[:, 2] - 1) < 1e-9)
        interior = (np.abs(pts[:, 2] - 1) < 1e-9) & (pts[:, 0] < 0.7) & \
                   (pts[:, 1] > 0.1) & (pts[:, 1] < 0.9)
        assert on_edge.any() and interior.any()
        assert field.lambdas[on_edge].min() > field.lambdas[interior].max()

    def test_k_equals_n_all_equal(self, rng):
        pc = PointCloud(rng.normal(size=(30, 3)))
        field = local_curvature_energies(pc, k=30)
        assert np.ptp(field.lambdas) < 1e-12

    def test_matches_explicit_eigendecomposition(self, rng):
        pts = rng.normal(size=(60, 3))
        field = local_curvature_energies(PointCloud(pts), k=12)
        for i in range(0, 60, 7):
            assert abs(field.lambdas[i] - oracle_lambda(pts, i, 12)) < 1e-12

    def test_rejects_small_k(self, rng):
        pc = PointCloud(rng.normal(size=(10, 3)))
        with pytest.raises(ValueError):
            local_curvature_energies(pc, k=2)
        with pytest.raises(ValueError):
            local_curvature_energies(pc, k=11)

    def test_rigid_motion_invariance(self, rng):
        pc = PointCloud(rng.normal(size=(80, 3)))
        t = random_transform(rng)
        a = local_curvature_energies(pc, k=16).lambdas
        b = local_curvature_energies(apply_transform(pc, t), k=16).lambdas
        assert np.abs(a - b).max() < 1e-12

    def test_nonnegative(self, rng):
        pc = PointCloud(rng.normal(size=(100, 3)) * 1e-6)
        field = local_curvature_energies(pc, k=8)
        assert (field.lambdas >= 0).all()


class TestSelectSalientPoints:
    def test_m1_is_argmax(self, rng):
        pc = PointCloud(rng.normal(size=(40, 3)))
        field = local_curvature_energies(pc, k=8)
        got = select_salient_points(pc, field, m=1, pool_fraction=0.25)
        assert got.indices.tolist() == [int(np.argmax(field.lambdas))]

    def test_full_selection_covers_all(self, rng):
        pc = PointCloud(rng.normal(size=(25, 3)))
        field = local_curvature_energies(pc, k=6)
        got = select_salient_points(pc, field, m=25, pool_fraction=1.0)
        assert sorted(got.indices.tolist()) == list(range(25))
        assert got.indices[0] == int(np.argmax(field.lambdas))

    def test_cube_edge_pool_and_maximin_oracle(self):
        pc = cube_edge_cloud()
        field = local_curvature_energies(pc, k=9)
        m, frac = 8, 0.25
        got = select_salient_points(pc, field, m=m, pool_fraction=frac)

        n = pc.n
        pool_size = -(-n // 4)  # ceil(0.25 n)
        order = np.argsort(-field.lambdas, kind="stable")
        pool = np.sort(order[:pool_size])
        threshold = field.lambdas[order[pool_size - 1]]
        assert (field.lambdas[got.indices] >= threshold - 1e-15).all()

        start = int(np.searchsorted(pool, order[0]))
        expect = pool[brute_fps(pc.points[pool], m, start)]
        assert got.indices.tolist() == expect.tolist()

    def test_all_equal_lambdas_reduce_to_fps(self, rng):
        pc = PointCloud(rng.normal(size=(32, 3)))
        field = SaliencyField(np.full(32, 0.5), 8)
        got = select_salient_points(pc, field, m=10, pool_fraction=1.0)
        assert got.indices.tolist() == farthest_point_sample(pc, 10, start=0).tolist()

    def test_permutation_equivariance(self, rng):
        pts = rng.normal(size=(50, 3))
        # distinct lambdas so ties cannot mask permutation errors
        perm = rng.permutation(50)
        pc, pcp = PointCloud(pts), PointCloud(pts[perm])
        f, fp = local_curvature_energies(pc, 10), local_curvature_energies(pcp, 10)
        a = select_salient_points(pc, f, m=12, pool_fraction=0.5)
        b = select_salient_points(pcp, fp, m=12, pool_fraction=0.5)
        assert np.abs(np.sort(pts[a.indices], axis=0) - np.sort(pcp.points[b.indices], axis=0)).max() < 1e-12

    def test_pool_too_small_rejected(self, rng):
        pc = PointCloud(rng.normal(size=(40, 3)))
        field = local_curvature_energies(pc, k=8)
        with pytest.raises(ValueError, match="pool"):
            select_salient_points(pc, field, m=20, pool_fraction=0.25)

    def test_validates_m_and_fraction(self, rng):
        pc = PointCloud(rng.normal(size=(10, 3)))
        field = local_curvature_energies(pc, k=4)
        with pytest.raises(ValueError):
            select_salient_points(pc, field, m=0)
        with pytest.raises(ValueError):
            select_salient_points(pc, field, m=11, pool_fraction=1.0)
        with pytest.raises(ValueError):
            select_salient_points(pc, field, m=2, pool_fraction=0.0)

    def test_salient_set_rejects_duplicates(self):
        with pytest.raises(ValueError):
            SalientSet(np.array([1, 1]), np.array([0.5, 0.5]))
