import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from flsreg.basis import (
    BasisSpec,
    SpecMismatchError,
    basis_eval,
    basis_grad,
    coefficients,
    delta_distance_sq,
    evaluate_features,
    sobolev_weights,
)
from flsreg.core import DimensionError, PointCloud

from .oracles import naive_basis


def line(order=4, lo=-1.0, hi=1.0):
    return BasisSpec(np.array([lo]), np.array([hi]), order)


class TestSpec:
    def test_size_and_ordering(self):
        spec = BasisSpec.cube(3, order=4)
        assert spec.size == 125
        assert spec.indices[0].tolist() == [0, 0, 0]
        assert spec.indices[1].tolist() == [0, 0, 1]  # last dimension fastest
        assert spec.indices[5].tolist() == [0, 1, 0]
        assert spec.flat_index([1, 0, 0]) == 25

    def test_default_weight_exponent(self):
        assert BasisSpec.cube(3).weight_exponent == 2.0
        assert BasisSpec.cube(2).weight_exponent == 1.5

    def test_invalid(self):
        with pytest.raises(ValueError):
            BasisSpec(np.array([1.0]), np.array([1.0]))
        with pytest.raises(ValueError):
            BasisSpec.cube(3, order=-1)


class TestEval:
    def test_constant_on_interval(self):
        spec = line()
        v = basis_eval(spec, [0], [0.37])
        assert v == pytest.approx(1 / math.sqrt(2), abs=1e-15)
        # oracle: the squared function integrates to one
        integral, _ = quad(lambda x: basis_eval(spec, [0], [x]) ** 2, -1, 1)
        assert integral == pytest.approx(1.0, abs=1e-12)

    def test_k2_at_origin(self):
        assert basis_eval(line(), [2], [0.0]) == pytest.approx(-1.0, abs=1e-15)

    def test_3d_example(self):
        spec = BasisSpec.cube(3)
        x = [-1.0, 0.3, 0.7]
        assert basis_eval(spec, [1, 0, 0], x) == pytest.approx(0.5, abs=1e-15)
        assert naive_basis(x, [1, 0, 0], [-1] * 3, [1] * 3) == pytest.approx(0.5, abs=1e-15)
        # normality of this index by tensor Gauss-Legendre quadrature
        nodes, w = leggauss(20)
        X, Y, Z = np.meshgrid(nodes, nodes, nodes, indexing="ij")
        W = w[:, None, None] * w[None, :, None] * w[None, None, :]
        f = np.cos(math.pi / 2 * (X + 1)) / math.sqrt(2 * 2 * 1)
        assert float(np.sum(W * f * f)) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(k=st.tuples(*[st.integers(0, 4)] * 3), x=st.tuples(*[st.floats(-1.5, 1.5)] * 3))
    def test_matches_naive(self, k, x):
        spec = BasisSpec(np.array([-1.0, -0.5, 0.0]), np.array([1.0, 2.0, 0.5]), 4)
        assert basis_eval(spec, k, x) == pytest.approx(
            naive_basis(x, k, spec.lower, spec.upper), abs=1e-13)

    def test_rejects_out_of_range_index(self):
        with pytest.raises(ValueError):
            basis_eval(BasisSpec.cube(3), [5, 0, 0], [0, 0, 0])

    def test_evaluates_outside_domain(self):
        spec = line()
        assert math.isfinite(basis_eval(spec, [3], [4.2]))


class TestGrad:
    def test_constant_has_zero_gradient(self):
        np.testing.assert_array_equal(basis_grad(BasisSpec.cube(3), [0, 0, 0], [0.1, 0.2, 0.3]), 0.0)

    def test_1d_example(self):
        g = basis_grad(line(), [1], [0.0])
        assert g[0] == pytest.approx(-math.pi / 2, rel=1e-12)  # -kbar * sin(pi/2) / h, kbar = pi/2, h = 1
        h = 1e-6
        fd = (basis_eval(line(), [1], [h]) - basis_eval(line(), [1], [-h])) / (2 * h)
        assert g[0] == pytest.approx(fd, rel=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(k=st.tuples(*[st.integers(0, 4)] * 3), x=st.tuples(*[st.floats(-1, 1)] * 3))
    def test_finite_differences(self, k, x):
        spec = BasisSpec.cube(3)
        g = basis_grad(spec, k, x)
        h = 1e-6
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            fd = (basis_eval(spec, k, np.add(x, e)) - basis_eval(spec, k, np.subtract(x, e))) / (2 * h)
            assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-8)

    def test_evaluate_features_gradient_matches_scalar(self, rng):
        spec = BasisSpec.cube(3)
        pts = rng.uniform(-1, 1, (7, 3))
        F, G = evaluate_features(spec, pts, gradient=True)
        for n in range(7):
            for idx in (0, 3, 31, 124):
                k = spec.indices[idx]
                assert F[idx, n] == pytest.approx(basis_eval(spec, k, pts[n]), abs=1e-13)
                np.testing.assert_allclose(G[:, idx, n], basis_grad(spec, k, pts[n]), atol=1e-12)


class TestCoefficients:
    def test_single_point(self):
        spec = BasisSpec.cube(3)
        x = np.array([0.2, -0.4, 0.9])
        c = coefficients(spec, PointCloud([x]))
        for idx in range(spec.size):
            assert c.values[idx] == pytest.approx(basis_eval(spec, spec.indices[idx], x), abs=1e-14)

    def test_constant_index(self, rng):
        spec = BasisSpec.cube(3)
        c = coefficients(spec, PointCloud(rng.uniform(-1, 1, (50, 3))))
        assert c[[0, 0, 0]] == pytest.approx(1 / math.sqrt(8), abs=1e-15)

    def test_against_double_loop(self, rng):
        spec = BasisSpec.cube(3, order=5)
        pts = rng.uniform(-1, 1, (100, 3))
        c = coefficients(spec, PointCloud(pts))
        ref = np.array([
            sum(naive_basis(p, k, spec.lower, spec.upper) for p in pts) / len(pts)
            for k in spec.indices
        ])
        np.testing.assert_allclose(c.values, ref, rtol=0, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            coefficients(BasisSpec.cube(3), PointCloud([[0.0, 0.0]]))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_permutation_invariance_bit_exact(self, seed):
        r = np.random.default_rng(seed)
        pts = r.uniform(-1, 1, (257, 3))
        spec = BasisSpec.cube(3)
        a = coefficients(spec, PointCloud(pts)).values
        b = coefficients(spec, PointCloud(pts[r.permutation(len(pts))])).values
        assert np.array_equal(a, b)

    def test_linear_time(self, rng):
        spec = BasisSpec.cube(3)
        small = rng.uniform(-1, 1, (20_000, 3))
        large = rng.uniform(-1, 1, (40_000, 3))

        def median_time(pts):
            times = []
            for _ in range(7):
                t0 = time.perf_counter()
                coefficients(spec, pts)
                times.append(time.perf_counter() - t0)
            return float(np.median(times))

        median_time(small)
        assert median_time(large) / median_time(small) <= 2.3


class TestWeightsAndDistance:
    def test_weights(self):
        w = sobolev_weights(BasisSpec.cube(3))
        spec = BasisSpec.cube(3)
        assert w[0] == 1.0
        assert w[spec.flat_index([1, 0, 0])] == pytest.approx(0.25)
        w1 = sobolev_weights(BasisSpec(np.array([0.0]), np.array([1.0]), 4, weight_exponent=1.0))
        assert w1[2] == pytest.approx(0.2)

    def test_zero_for_equal(self, rng):
        spec = BasisSpec.cube(3)
        pts = rng.uniform(-1, 1, (40, 3))
        cA = coefficients(spec, pts)
        assert delta_distance_sq(cA, cA) == 0.0
        cB = coefficients(spec, pts[::-1])
        assert delta_distance_sq(cA, cB) == 0.0

    def test_spec_mismatch(self, rng):
        pts = rng.uniform(-1, 1, (5, 3))
        with pytest.raises(SpecMismatchError):
            delta_distance_sq(coefficients(BasisSpec.cube(3), pts), coefficients(BasisSpec.cube(3, order=3), pts))

    def test_translation_sensitivity(self, rng):
        spec = BasisSpec.cube(3)
        pts = rng.uniform(-0.5, 0.5, (60, 3))
        d = delta_distance_sq(coefficients(spec, pts), coefficients(spec, pts + [0.05, 0, 0]))
        assert d > 0

    def test_quadrature_equivalence_1d(self, rng):
        # truncated mixture difference integrated by Gauss-Legendre, with its
        # own cosine evaluation
        K = 20
        spec = line(K)
        A = rng.uniform(-1, 1, 5)
        B = rng.uniform(-1, 1, 5)
        cA = coefficients(spec, A.reshape(-1, 1))
        cB = coefficients(spec, B.reshape(-1, 1))
        nodes, w = leggauss(200)

        def mixture(points):
            total = np.zeros_like(nodes)
            for k in range(K + 1):
                ck = np.mean([naive_basis([p], [k], [-1], [1]) for p in points])
                total += ck * np.array([naive_basis([x], [k], [-1], [1]) for x in nodes])
            return total

        diff = mixture(A) - mixture(B)
        assert delta_distance_sq(cA, cB) == pytest.approx(float(np.sum(w * diff**2)), abs=1e-8)
