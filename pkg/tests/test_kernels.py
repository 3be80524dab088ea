"""Kernel families, the component weight vector, and combined evaluation.

Formula checks recompute every kernel by hand with math-module arithmetic so
an implementation bug cannot hide in a shared numpy expression.
"""

import math

import numpy as np
import pytest

from sparseode import kernels
from sparseode.errors import ConfigurationError, DimensionError
from sparseode.kernels import (
    KernelSpec,
    ThetaVector,
    canonical_pairs,
    component_label,
    interaction_eval,
    kernel_matrix,
    kernel_values,
    pair_slot,
    weighted_eval,
    weighted_kernel_matrix,
)


def hand_value(family, nu, u, v):
    d = abs(u - v)
    if family == "matern1":
        r = math.sqrt(3.0) * d / nu
        return (1.0 + r) * math.exp(-r)
    if family == "matern2":
        r = math.sqrt(5.0) * d / nu
        return (1.0 + r + 5.0 * d * d / (3.0 * nu * nu)) * math.exp(-r)
    if family == "gaussian":
        return math.exp(-d * d / (2.0 * nu * nu))
    raise AssertionError(family)


class TestEval:
    def test_matern1_zero_distance_is_one(self):
        for nu in (0.05, 1.0, 3.7):
            assert kernels.eval(KernelSpec("matern1", nu), 0.42, 0.42) == 1.0

    def test_linear_corner_value(self):
        spec = KernelSpec("linear", rescale=(0.0, 1.0))
        assert kernels.eval(spec, 1.0, 1.0) == pytest.approx(0.25, abs=1e-15)

    def test_gaussian_unit_distance(self):
        spec = KernelSpec("gaussian", 1.0)
        assert kernels.eval(spec, 0.0, 1.0) == pytest.approx(math.exp(-0.5),
                                                             abs=1e-15)

    @pytest.mark.parametrize("family", ["matern1", "matern2", "gaussian"])
    def test_formula_matches_hand_computation(self, family):
        rng = np.random.default_rng(3)
        for _ in range(20):
            nu = float(rng.uniform(0.1, 2.0))
            u, v = rng.uniform(-2.0, 2.0, 2)
            got = kernels.eval(KernelSpec(family, nu), u, v)
            assert got == pytest.approx(hand_value(family, nu, u, v), abs=1e-14)

    def test_linear_formula_on_rescaled_inputs(self):
        spec = KernelSpec("linear", rescale=(2.0, 6.0))
        u, v = 3.0, 5.5
        expected = ((3.0 - 2.0) / 4.0 - 0.5) * ((5.5 - 2.0) / 4.0 - 0.5)
        assert kernels.eval(spec, u, v) == pytest.approx(expected, abs=1e-15)

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        specs = [KernelSpec("matern1", 0.3), KernelSpec("matern2", 1.1),
                 KernelSpec("gaussian", 0.7),
                 KernelSpec("linear", rescale=(-1.0, 1.0))]
        for spec in specs:
            for _ in range(10):
                u, v = rng.uniform(-1.0, 1.0, 2)
                assert kernels.eval(spec, u, v) == kernels.eval(spec, v, u)

    def test_rescale_maps_interval_to_unit(self):
        plain = KernelSpec("matern1", 0.5)
        mapped = KernelSpec("matern1", 0.5, rescale=(10.0, 20.0))
        assert kernels.eval(mapped, 15.0, 17.5) == pytest.approx(
            kernels.eval(plain, 0.5, 0.75), abs=1e-15)


class TestSpecValidation:
    def test_unknown_family(self):
        with pytest.raises(ConfigurationError):
            KernelSpec("cubic")

    @pytest.mark.parametrize("nu", [0.0, -1.0])
    def test_nonpositive_bandwidth(self, nu):
        with pytest.raises(ConfigurationError):
            KernelSpec("matern1", nu)

    def test_linear_requires_rescale(self):
        with pytest.raises(ConfigurationError):
            KernelSpec("linear")

    def test_degenerate_rescale_interval(self):
        with pytest.raises(ConfigurationError):
            KernelSpec("matern1", 1.0, rescale=(1.0, 1.0))


class TestInteractionEval:
    def test_zero_distance_product_is_one(self):
        spec = KernelSpec("matern1", 0.4)
        assert interaction_eval(spec, spec, 0.2, 0.9, 0.2, 0.9) == 1.0

    def test_absorbing_zero_factor(self):
        lin = KernelSpec("linear", rescale=(0.0, 1.0))
        m1 = KernelSpec("matern1", 1.0)
        # first factor is (0.5 - 0.5) * anything = 0
        assert interaction_eval(lin, m1, 0.5, 0.1, 0.9, 0.8) == 0.0

    def test_equals_product_of_evals(self):
        rng = np.random.default_rng(5)
        sk = KernelSpec("matern2", 0.6)
        sl = KernelSpec("gaussian", 1.3)
        for _ in range(30):
            uk, ul, vk, vl = rng.uniform(-1.0, 1.0, 4)
            prod = kernels.eval(sk, uk, vk) * kernels.eval(sl, ul, vl)
            assert interaction_eval(sk, sl, uk, ul, vk, vl) == pytest.approx(
                prod, abs=1e-15)


class TestWeightedEval:
    def setup_method(self):
        self.specs = [KernelSpec("matern1", 0.5), KernelSpec("gaussian", 0.8)]

    def test_zero_theta(self):
        theta = ThetaVector.zeros(2)
        assert weighted_eval(theta, self.specs, [0.1, 0.2], [0.7, 0.4]) == 0.0

    def test_unit_mass_on_one_main(self):
        theta = ThetaVector(np.array([0.0, 1.0]), np.zeros(2))
        u, v = np.array([0.3, 0.6]), np.array([0.9, 0.1])
        assert weighted_eval(theta, self.specs, u, v) == pytest.approx(
            kernels.eval(self.specs[1], u[1], v[1]), abs=1e-15)

    def test_all_ones_p2_gives_double_interaction(self):
        theta = ThetaVector.ones(2)
        u, v = np.array([0.3, 0.6]), np.array([0.9, 0.1])
        k1 = kernels.eval(self.specs[0], u[0], v[0])
        k2 = kernels.eval(self.specs[1], u[1], v[1])
        assert weighted_eval(theta, self.specs, u, v) == pytest.approx(
            k1 + k2 + 2.0 * k1 * k2, abs=1e-14)

    def test_linear_in_theta(self):
        rng = np.random.default_rng(6)
        u, v = rng.uniform(0.0, 1.0, (2, 2))
        for _ in range(10):
            t1 = ThetaVector.from_flat(rng.uniform(0.0, 2.0, 4), 2)
            t2 = ThetaVector.from_flat(rng.uniform(0.0, 2.0, 4), 2)
            a, b = rng.uniform(0.0, 3.0, 2)
            combo = ThetaVector.from_flat(a * t1.flat() + b * t2.flat(), 2)
            lhs = weighted_eval(combo, self.specs, u, v)
            rhs = (a * weighted_eval(t1, self.specs, u, v)
                   + b * weighted_eval(t2, self.specs, u, v))
            assert lhs == pytest.approx(rhs, abs=1e-14)

    def test_dimension_mismatch(self):
        theta = ThetaVector.ones(3)
        with pytest.raises(DimensionError):
            weighted_eval(theta, self.specs, [0.1, 0.2], [0.3, 0.4])


class TestPositiveSemidefinite:
    @pytest.mark.parametrize("family,nu", [("matern1", 0.3), ("matern2", 0.9),
                                           ("gaussian", 0.5)])
    def test_gram_matrix_psd(self, family, nu):
        rng = np.random.default_rng(7)
        x = rng.uniform(-1.0, 2.0, 20)
        K = kernel_matrix(KernelSpec(family, nu), x, x)
        assert np.min(np.linalg.eigvalsh(K)) >= -1e-8

    def test_linear_gram_psd(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(0.0, 1.0, 20)
        K = kernel_matrix(KernelSpec("linear", rescale=(0.0, 1.0)), x, x)
        assert np.min(np.linalg.eigvalsh(K)) >= -1e-8

    def test_weighted_gram_psd(self):
        rng = np.random.default_rng(9)
        specs = [KernelSpec("matern1", 0.4), KernelSpec("gaussian", 0.6),
                 KernelSpec("matern2", 1.0)]
        theta = ThetaVector.from_flat(rng.uniform(0.0, 2.0, 9), 3)
        X = rng.uniform(-1.0, 1.0, (20, 3))
        K = weighted_kernel_matrix(theta, specs, X, X)
        assert np.max(np.abs(K - K.T)) < 1e-12
        assert np.min(np.linalg.eigvalsh(K)) >= -1e-8


class TestComponentOrdering:
    def test_canonical_pairs_p3(self):
        assert canonical_pairs(3) == [(0, 1), (0, 2), (1, 0), (1, 2),
                                      (2, 0), (2, 1)]

    def test_pair_slot_inverts_ordering(self):
        p = 4
        for slot, (k, l) in enumerate(canonical_pairs(p)):
            assert pair_slot(p, k, l) == slot

    def test_component_label(self):
        assert component_label(3, 0) == "x1"
        assert component_label(3, 3) == "x1:x2"
        assert component_label(3, 8) == "x3:x2"


class TestThetaVector:
    def test_flat_round_trip(self):
        rng = np.random.default_rng(10)
        flat = rng.uniform(0.0, 1.0, 9)
        theta = ThetaVector.from_flat(flat, 3)
        assert np.array_equal(theta.flat(), flat)
        assert theta.p == 3
        assert theta.n_components == 9

    def test_bad_interaction_length(self):
        with pytest.raises(DimensionError):
            ThetaVector(np.ones(3), np.ones(5))

    def test_bad_flat_length(self):
        with pytest.raises(DimensionError):
            ThetaVector.from_flat(np.ones(8), 3)

    def test_support_threshold(self):
        theta = ThetaVector(np.array([0.0, 1e-12, 0.5]), np.zeros(6))
        assert np.array_equal(theta.support(), [2])


class TestMatrixHelpers:
    def test_kernel_matrix_matches_scalar_eval(self):
        rng = np.random.default_rng(11)
        spec = KernelSpec("matern2", 0.7)
        u = rng.uniform(-1.0, 1.0, 5)
        v = rng.uniform(-1.0, 1.0, 4)
        K = kernel_matrix(spec, u, v)
        for i in range(5):
            for j in range(4):
                assert K[i, j] == pytest.approx(kernels.eval(spec, u[i], v[j]),
                                                abs=1e-15)

    def test_kernel_values_broadcasts(self):
        spec = KernelSpec("gaussian", 1.0)
        u = np.array([0.0, 1.0])
        out = kernel_values(spec, u, 0.5)
        assert out.shape == (2,)
        assert out[0] == out[1]
