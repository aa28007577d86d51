import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flsreg.bench.perturb import random_rotation
from flsreg.bench.shapes import primitive_cloud
from flsreg.core import PointCloud, SimilarityTransform, apply_transform, rotation_error_deg, so3_exp
from flsreg.icp import KdTree, TooFewCorrespondencesError, icp_refine, nearest, rigid_align


def linear_scan(points, q):
    d = np.sqrt(((points - q) ** 2).sum(axis=1))
    return int(np.argmin(d)), float(d.min())


class TestKdTree:
    def test_self_query(self, rng):
        pts = rng.normal(size=(50, 3))
        tree = KdTree(pts)
        for i in (0, 17, 49):
            assert nearest(tree, pts[i]) == (i, 0.0)

    def test_two_points(self):
        tree = KdTree([[0, 0, 0], [10, 0, 0]])
        assert nearest(tree, [1, 0, 0]) == (0, 1.0)

    def test_matches_linear_scan(self, rng):
        pts = rng.uniform(-1, 1, (500, 3))
        tree = KdTree(pts)
        queries = rng.uniform(-1.2, 1.2, (100, 3))
        idx, dist = tree.query(queries)
        for q, i, d in zip(queries, idx, dist):
            j, dj = linear_scan(pts, q)
            assert i == j
            assert d == pytest.approx(dj, abs=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 60))
    def test_property_linear_scan(self, seed, n):
        r = np.random.default_rng(seed)
        pts = r.normal(size=(n, 3))
        tree = KdTree(pts)
        q = r.normal(size=3)
        i, d = nearest(tree, q)
        j, dj = linear_scan(pts, q)
        assert d == pytest.approx(dj, abs=1e-15)
        assert np.linalg.norm(pts[i] - q) == pytest.approx(dj, abs=1e-15)

    def test_empty(self):
        with pytest.raises(ValueError):
            KdTree(np.zeros((0, 3)))


class TestRigidAlign:
    def test_exact(self, rng):
        src = rng.normal(size=(20, 3))
        R = so3_exp([0.4, -0.2, 1.0])
        R_est, t_est = rigid_align(src, src @ R.T + [1, 2, 3])
        np.testing.assert_allclose(R_est, R, atol=1e-12)
        np.testing.assert_allclose(t_est, [1, 2, 3], atol=1e-12)

    def test_reflection_corrected(self, rng):
        src = rng.normal(size=(20, 3))
        dst = src * [1, 1, -1]
        R, _ = rigid_align(src, dst)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)


class TestIcp:
    def test_identity(self, shape_cloud):
        res = icp_refine(shape_cloud, shape_cloud)
        np.testing.assert_allclose(res.transform.rotation, np.eye(3), atol=1e-12)
        assert res.iterations == 1 and res.converged

    @pytest.mark.parametrize("seed", range(4))
    def test_refines_close_guess(self, seed):
        cloud = primitive_cloud(40 + seed)
        rng = np.random.default_rng(seed)
        T = SimilarityTransform(random_rotation((-1.5, 1.5), seed), rng.uniform(1, 2, 3))
        target = apply_transform(cloud, T)
        # within 10 degrees and 0.05 of the truth
        R_off = random_rotation((math.radians(8), math.radians(8)), seed + 100)
        guess = SimilarityTransform(R_off @ T.rotation, T.translation + [0.025, -0.02, 0.02])
        res = icp_refine(cloud, target, guess)
        assert rotation_error_deg(res.transform.rotation, T.rotation) < 0.01

    def test_mse_monotone(self, shape_cloud, rng):
        T = SimilarityTransform(so3_exp([0.1, 0.1, -0.1]), [0.03, 0.0, 0.02])
        tgt = PointCloud(apply_transform(shape_cloud, T).points + rng.normal(scale=0.01, size=(len(shape_cloud), 3)))
        res = icp_refine(shape_cloud, tgt)
        h = np.asarray(res.details["mse_history"])
        assert np.all(np.diff(h) <= 0)
        assert res.final_cost == h[-1]

    def test_scale_kept(self, shape_cloud):
        T = SimilarityTransform(so3_exp([0.0, 0.05, 0.0]), [0.0, 0.0, 0.01], 2.0)
        res = icp_refine(shape_cloud, apply_transform(shape_cloud, T), SimilarityTransform(np.eye(3), np.zeros(3), 2.0))
        assert res.transform.scale == 2.0
        assert rotation_error_deg(res.transform.rotation, T.rotation) < 0.01

    def test_too_few_correspondences(self, shape_cloud):
        far = apply_transform(shape_cloud, SimilarityTransform(np.eye(3), [100.0, 0, 0]))
        with pytest.raises(TooFewCorrespondencesError):
            icp_refine(shape_cloud, far)
