import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flsreg.core import (
    DegenerateCloudError,
    DimensionError,
    PointCloud,
    SimilarityTransform,
    apply_transform,
    normalize_to_unit_cube,
    rotation_error_deg,
    so3_exp,
    translation_error,
)


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


unit_axes = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 1e-3)


class TestPointCloud:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            PointCloud([[0, 0, np.nan]])

    def test_rejects_bad_dimension(self):
        with pytest.raises(DimensionError):
            PointCloud(np.zeros((3, 4)))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((0, 3)))

    def test_immutable(self):
        c = PointCloud([[0, 0, 0]])
        with pytest.raises(ValueError):
            c.points[0, 0] = 1.0


class TestTransform:
    def test_identity(self, rng):
        c = PointCloud(rng.normal(size=(20, 3)))
        out = apply_transform(c, SimilarityTransform.identity())
        np.testing.assert_array_equal(out.points, c.points)

    def test_scale_translation(self):
        T = SimilarityTransform(np.eye(3), [1, 0, 0], 2.0)
        out = apply_transform(PointCloud([[0, 0, 0]]), T)
        np.testing.assert_array_equal(out.points, [[1, 0, 0]])

    def test_quarter_turn(self):
        T = SimilarityTransform(rot_z(math.pi / 2), np.zeros(3))
        out = apply_transform(PointCloud([[1, 0, 0]]), T)
        np.testing.assert_allclose(out.points, [[0, 1, 0]], atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            apply_transform(PointCloud([[0, 0]]), SimilarityTransform.identity(3))

    def test_rejects_improper_rotation(self):
        with pytest.raises(ValueError):
            SimilarityTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
        with pytest.raises(ValueError):
            SimilarityTransform(np.eye(3), np.zeros(3), scale=0.0)

    @settings(max_examples=50, deadline=None)
    @given(axis=unit_axes, angle=st.floats(-3.0, 3.0), s=st.floats(0.1, 10),
           t=st.tuples(*[st.floats(-5, 5)] * 3))
    def test_inverse_round_trip(self, axis, angle, s, t):
        axis = np.asarray(axis) / np.linalg.norm(axis)
        T = SimilarityTransform(so3_exp(axis * angle), t, s)
        c = PointCloud(np.random.default_rng(0).uniform(-1, 1, (30, 3)))
        back = apply_transform(apply_transform(c, T), T.inverse())
        np.testing.assert_allclose(back.points, c.points, atol=1e-9)


class TestErrors:
    def test_rotation_error_zero(self):
        R = so3_exp([0.3, -0.2, 0.9])
        assert rotation_error_deg(R, R) == pytest.approx(0.0, abs=1e-6)

    @pytest.mark.parametrize("axis", [[1, 0, 0], [0, 1, 0], [1, 1, 1], [0.3, -0.7, 0.2]])
    def test_rotation_error_thirty(self, axis):
        a = np.asarray(axis, float) / np.linalg.norm(axis)
        R = so3_exp(a * math.radians(30))
        assert rotation_error_deg(np.eye(3), R) == pytest.approx(30.0, abs=1e-9)

    def test_rotation_error_near_pi(self):
        R = rot_x(math.radians(179.9))
        assert rotation_error_deg(np.eye(3), R) == pytest.approx(179.9, abs=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(a=unit_axes, b=unit_axes, ta=st.floats(-3, 3), tb=st.floats(-3, 3))
    def test_rotation_error_symmetric(self, a, b, ta, tb):
        Ra = so3_exp(np.asarray(a) / np.linalg.norm(a) * ta)
        Rb = so3_exp(np.asarray(b) / np.linalg.norm(b) * tb)
        assert rotation_error_deg(Ra, Rb) == pytest.approx(rotation_error_deg(Rb, Ra), abs=1e-9)

    def test_rotation_error_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            rotation_error_deg(np.eye(3) * 1.1, np.eye(3))

    def test_rotation_error_2d(self):
        c, s = math.cos(0.5), math.sin(0.5)
        assert rotation_error_deg([[c, -s], [s, c]], np.eye(2)) == pytest.approx(math.degrees(0.5))

    @pytest.mark.parametrize("a,b,expected", [
        ([1, 2, 3], [1, 2, 3], 0.0),
        ([0, 0, 0], [0.3, 0.4, 0], 0.5),
        ([1, 1, 1], [1, 1, 1.02], 0.02),
    ])
    def test_translation_error(self, a, b, expected):
        assert translation_error(a, b) == pytest.approx(expected, abs=1e-12)

    def test_translation_error_mismatch(self):
        with pytest.raises(DimensionError):
            translation_error([0, 0], [0, 0, 0])


class TestNormalize:
    def test_cube_corners(self):
        corners = np.array([[i >> 2 & 1, i >> 1 & 1, i & 1] for i in range(8)], float)
        out, T = normalize_to_unit_cube(PointCloud(corners))
        np.testing.assert_allclose(out.points, corners - 0.5, atol=1e-15)
        assert T.scale == 1.0

    def test_segment(self):
        out, T = normalize_to_unit_cube(PointCloud([[0, 0, 0], [2, 0, 0]]))
        np.testing.assert_allclose(out.points, [[-0.5, 0, 0], [0.5, 0, 0]])
        assert T.scale == 0.5

    def test_degenerate(self):
        with pytest.raises(DegenerateCloudError):
            normalize_to_unit_cube(PointCloud([[1, 1, 1], [1, 1, 1]]))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10_000), spread=st.floats(1e-3, 1e3))
    def test_properties(self, seed, spread):
        pts = np.random.default_rng(seed).normal(size=(50, 3)) * spread + 7.0
        c = PointCloud(pts)
        out, T = normalize_to_unit_cube(c)
        ext = out.points.max(axis=0) - out.points.min(axis=0)
        assert ext.max() == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.abs(out.points) <= 0.5 + 1e-12)
        np.testing.assert_allclose(T.inverse().apply(out.points), pts, atol=1e-9 * max(1.0, spread))
        again, T2 = normalize_to_unit_cube(out)
        assert T2.scale == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(again.points, out.points, atol=1e-12)
