"""Kernel ridge smoothing of observed trajectories and its tuning rules."""

import numpy as np
import pytest

from sparseode.errors import ConfigurationError, DimensionError
from sparseode.kernels import KernelSpec, kernel_matrix
from sparseode.trajectory import (
    evaluate_trajectory,
    fit_trajectory,
    gcv_score,
    select_bandwidth,
    select_bandwidths,
)


def ridge_coef_oracle(times, y, spec, lam):
    K = kernel_matrix(spec, times, times)
    n = len(times)
    return np.linalg.solve(K + n * lam * np.eye(n), y)


def gcv_oracle(times, y, spec, lam):
    """n * ||(I - A)y||^2 / tr(I - A)^2 with A = K (K + n lam I)^{-1}."""
    K = kernel_matrix(spec, times, times)
    n = len(times)
    A = K @ np.linalg.inv(K + n * lam * np.eye(n))
    resid = y - A @ y
    return n * float(resid @ resid) / float(np.trace(np.eye(n) - A)) ** 2


class TestFitTrajectory:
    def setup_method(self):
        rng = np.random.default_rng(21)
        self.times = np.sort(rng.uniform(0.0, 1.0, 18))
        self.y = np.sin(4.0 * self.times) + 0.05 * rng.standard_normal(18)
        self.spec = KernelSpec("matern2", 0.3)

    def test_coefficients_match_ridge_oracle(self):
        fit = fit_trajectory(self.times, self.y, self.spec,
                             lambda_grid=[1e-3])
        oracle = ridge_coef_oracle(self.times, self.y, self.spec, 1e-3)
        np.testing.assert_allclose(fit.coef, oracle, atol=1e-10)
        K = kernel_matrix(self.spec, self.times, self.times)
        np.testing.assert_allclose(fit.fitted, K @ oracle, atol=1e-10)

    def test_gcv_selection_matches_bruteforce(self):
        grid = np.logspace(-6.0, 0.0, 12)
        fit = fit_trajectory(self.times, self.y, self.spec, lambda_grid=grid)
        scores = [gcv_oracle(self.times, self.y, self.spec, lam)
                  for lam in grid]
        assert fit.lam == pytest.approx(grid[int(np.argmin(scores))])
        assert fit.gcv == pytest.approx(min(scores), rel=1e-8)

    def test_gcv_score_matches_oracle_formula(self):
        K = kernel_matrix(self.spec, self.times, self.times)
        eigvals, U = np.linalg.eigh(K)
        eigvals = np.maximum(eigvals, 0.0)
        for lam in (1e-4, 1e-2, 1.0):
            got = gcv_score(lam, eigvals, U.T @ self.y, len(self.times))
            assert got == pytest.approx(
                gcv_oracle(self.times, self.y, self.spec, lam), rel=1e-9)

    def test_tie_prefers_larger_lambda(self):
        # zero data scores identically at every lambda
        fit = fit_trajectory(self.times, np.zeros(18), self.spec,
                             lambda_grid=[1e-4, 1e-2, 1e0])
        assert fit.lam == 1.0

    def test_validation(self):
        with pytest.raises(DimensionError):
            fit_trajectory(self.times, self.y[:-1], self.spec)
        with pytest.raises(ConfigurationError):
            fit_trajectory(np.array([0.3, 0.2, 0.5]), np.zeros(3), self.spec)
        with pytest.raises(ConfigurationError):
            fit_trajectory(self.times, self.y, self.spec, lambda_grid=[-1.0])
        with pytest.raises(DimensionError):
            fit_trajectory(np.array([0.5]), np.array([1.0]), self.spec)


class TestEvaluateTrajectory:
    def test_train_points_return_fitted_values(self):
        rng = np.random.default_rng(22)
        times = np.linspace(0.0, 1.0, 15)
        y = np.cos(3.0 * times) + 0.02 * rng.standard_normal(15)
        fit = fit_trajectory(times, y, KernelSpec("matern1", 0.2))
        np.testing.assert_allclose(evaluate_trajectory(fit, times),
                                   fit.fitted, atol=1e-12)

    def test_extrapolation_warns_but_returns(self):
        times = np.linspace(0.1, 1.0, 10)
        fit = fit_trajectory(times, np.ones(10), KernelSpec("gaussian", 0.5))
        with pytest.warns(RuntimeWarning, match="outside fitted span"):
            out = evaluate_trajectory(fit, 1.4)
        assert np.isfinite(out).all()

    def test_interior_evaluation_is_silent(self):
        import warnings

        times = np.linspace(0.0, 1.0, 10)
        fit = fit_trajectory(times, np.ones(10), KernelSpec("gaussian", 0.5))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            evaluate_trajectory(fit, np.array([0.25, 0.75]))


def cv_error_oracle(times, y, family, nu, folds, lambda_grid):
    """Hand-rolled contiguous-block CV with per-fold GCV ridge levels."""
    n = len(times)
    blocks = np.array_split(np.arange(n), folds)
    total = 0.0
    for test_idx in blocks:
        train_idx = np.setdiff1d(np.arange(n), test_idx)
        spec = KernelSpec(family, nu)
        scores = [gcv_oracle(times[train_idx], y[train_idx], spec, lam)
                  for lam in np.sort(lambda_grid)]
        lam = np.sort(lambda_grid)[int(np.argmin(scores))]
        coef = ridge_coef_oracle(times[train_idx], y[train_idx], spec, lam)
        pred = kernel_matrix(spec, times[test_idx], times[train_idx]) @ coef
        total += float(np.sum((y[test_idx] - pred) ** 2))
    return total / n


class TestSelectBandwidths:
    def setup_method(self):
        rng = np.random.default_rng(23)
        self.times = np.linspace(0.0, 1.0, 24)
        self.y = np.sin(6.0 * self.times) + 0.1 * rng.standard_normal(24)
        self.grid = np.logspace(-5.0, -1.0, 6)

    def test_matches_cv_oracle(self):
        nus = (0.05, 0.2, 0.8)
        spec = select_bandwidth(self.times, self.y, "matern2", nu_grid=nus,
                                folds=4, lambda_grid=self.grid)
        errors = [cv_error_oracle(self.times, self.y, "matern2", nu, 4,
                                  self.grid) for nu in nus]
        assert spec.nu == pytest.approx(nus[int(np.argmin(errors))])

    def test_tie_prefers_later_candidate(self):
        spec = select_bandwidth(self.times, np.zeros(24), "matern1",
                                nu_grid=(0.1, 0.9), folds=4,
                                lambda_grid=self.grid)
        assert spec.nu == 0.9

    def test_multi_column_matches_individual_calls(self):
        rng = np.random.default_rng(24)
        Y = np.column_stack([self.y, np.cos(3.0 * self.times)
                             + 0.1 * rng.standard_normal(24)])
        nus = (0.1, 0.4)
        joint = select_bandwidths(self.times, Y, "matern1", nu_grid=nus,
                                  folds=4, lambda_grid=self.grid)
        for col in range(2):
            single = select_bandwidth(self.times, Y[:, col], "matern1",
                                      nu_grid=nus, folds=4,
                                      lambda_grid=self.grid)
            assert joint[col].nu == single.nu

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            select_bandwidths(self.times, self.y, "matern1", folds=1)
        with pytest.raises(ConfigurationError):
            select_bandwidths(self.times, self.y, "matern1", folds=30)
        with pytest.raises(ConfigurationError):
            select_bandwidths(self.times, self.y, "matern1", nu_grid=())
        with pytest.raises(DimensionError):
            select_bandwidths(self.times, self.y[:-1], "matern1")
