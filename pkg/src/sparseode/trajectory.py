"""Kernel ridge smoothing of individual state trajectories over time.

Step one of the two-step estimator: each observed coordinate is smoothed by
penalized least squares in the RKHS of a time kernel,

    min_z (1/n) sum_i (y_i - z(t_i))^2 + lambda ||z||^2,

whose representer solution is z(t) = sum_i a_i K(t, t_i) with
a = (K + n*lambda*I)^{-1} y. The ridge level is picked by GCV on a log grid
and the kernel bandwidth by contiguous-block cross-validation over time.

There is no unpenalized intercept: the ridge acts on the full function, so
shrinkage pulls fitted values toward zero, not toward the mean.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .kernels import KernelSpec, kernel_matrix

DEFAULT_LAMBDA_GRID = np.logspace(-8.0, 1.0, 30)
# bandwidths quoted on the standardized [0,1] time axis
DEFAULT_NU_GRID = (0.025, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6)


@dataclass
class TrajectoryFit:
    """Fitted smoother for one coordinate.

    ``coef`` holds a = (K + n*lambda*I)^{-1} y; ``fitted`` the in-sample
    values K a; ``gcv`` the GCV score at the selected ridge level.
    """

    times: np.ndarray
    y: np.ndarray
    spec: KernelSpec
    lam: float
    coef: np.ndarray
    fitted: np.ndarray
    gcv: float


def _check_times(times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.shape[0] < 2:
        raise DimensionError("need at least two time points")
    if np.any(np.diff(times) <= 0):
        raise ConfigurationError("times must be strictly increasing")
    return times


def gcv_score(lam, eigvals, y_rot, n):
    """GCV(lambda) = n * ||(I - A)y||^2 / tr(I - A)^2 from the spectrum of K."""
    shrink = n * lam / (eigvals + n * lam)
    rss = float(np.sum((shrink * y_rot) ** 2))
    denom = float(np.sum(shrink)) ** 2
    return n * rss / denom


def fit_trajectory(times, y, spec, lambda_grid=None):
    """Fit one coordinate's smoother, selecting lambda by GCV.

    Grid ties resolve toward the larger (smoother) lambda. All candidates
    share one eigendecomposition of the kernel matrix.
    """
    times = _check_times(times)
    y = np.asarray(y, dtype=float)
    if y.shape != times.shape:
        raise DimensionError("y and times must have matching length")
    grid = DEFAULT_LAMBDA_GRID if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise ConfigurationError("lambda grid must be positive and nonempty")
    n = times.shape[0]
    K = kernel_matrix(spec, times, times)
    eigvals, U = np.linalg.eigh(K)
    eigvals = np.maximum(eigvals, 0.0)
    y_rot = U.T @ y

    best_lam, best_score = None, np.inf
    for lam in np.sort(grid):
        score = gcv_score(lam, eigvals, y_rot, n)
        if score <= best_score:
            best_lam, best_score = float(lam), score
    coef = U @ (y_rot / (eigvals + n * best_lam))
    fitted = K @ coef
    return TrajectoryFit(times, y, spec, best_lam, coef, fitted, best_score)


def evaluate_trajectory(fit, t):
    """Evaluate the fitted smoother at arbitrary times.

    Times outside the training span are allowed (the representer expansion
    extrapolates) but trigger a warning.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    lo, hi = fit.times[0], fit.times[-1]
    if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
        warnings.warn(
            "evaluating trajectory outside fitted span [%g, %g]" % (lo, hi),
            RuntimeWarning,
            stacklevel=2,
        )
    return kernel_matrix(fit.spec, t, fit.times) @ fit.coef


def _contiguous_folds(n, folds):
    if folds < 2:
        raise ConfigurationError("need at least 2 folds")
    if folds > n:
        raise ConfigurationError("folds (%d) exceed the number of points (%d)" % (folds, n))
    return np.array_split(np.arange(n), folds)


def select_bandwidths(times, Y, family, nu_grid=None, folds=10, lambda_grid=None):
    """Bandwidth selection for several coordinates sharing one time grid.

    Contiguous-block K-fold CV over time: for each candidate nu, each fold's
    block is predicted from a smoother fitted (with its own GCV lambda) on
    the remaining points; the nu with the smallest mean held-out squared
    error wins, ties resolving toward the larger nu. The per-(fold, nu)
    eigendecompositions are shared across coordinates.

    Returns a list of KernelSpec, one per column of Y.
    """
    times = _check_times(times)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != times.shape[0]:
        raise DimensionError("Y rows must match times")
    grid = DEFAULT_LAMBDA_GRID if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    nus = DEFAULT_NU_GRID if nu_grid is None else tuple(nu_grid)
    if len(nus) == 0:
        raise ConfigurationError("nu grid must be nonempty")
    n, q = Y.shape
    blocks = _contiguous_folds(n, folds)
    lam_sorted = np.sort(np.asarray(grid, dtype=float))

    cv_error = np.zeros((len(nus), q))
    for inu, nu in enumerate(nus):
        spec = KernelSpec(family, float(nu))
        sq_err = np.zeros(q)
        for test_idx in blocks:
            train_idx = np.setdiff1d(np.arange(n), test_idx)
            K_tr = kernel_matrix(spec, times[train_idx], times[train_idx])
            K_cross = kernel_matrix(spec, times[test_idx], times[train_idx])
            eigvals, U = np.linalg.eigh(K_tr)
            eigvals = np.maximum(eigvals, 0.0)
            n_tr = train_idx.shape[0]
            Z = K_cross @ U
            for col in range(q):
                y_rot = U.T @ Y[train_idx, col]
                best_lam, best_score = None, np.inf
                for lam in lam_sorted:
                    score = gcv_score(lam, eigvals, y_rot, n_tr)
                    if score <= best_score:
                        best_lam, best_score = lam, score
                pred = Z @ (y_rot / (eigvals + n_tr * best_lam))
                sq_err[col] += float(np.sum((Y[test_idx, col] - pred) ** 2))
        cv_error[inu] = sq_err / n

    specs = []
    for col in range(q):
        best_nu, best_err = None, np.inf
        for inu, nu in enumerate(nus):
            if cv_error[inu, col] <= best_err:
                best_nu, best_err = float(nu), cv_error[inu, col]
        specs.append(KernelSpec(family, best_nu))
    return specs


def select_bandwidth(times, y, family, nu_grid=None, folds=10, lambda_grid=None):
    """Single-coordinate convenience wrapper around select_bandwidths."""
    return select_bandwidths(times, np.asarray(y, dtype=float)[:, None], family,
                             nu_grid=nu_grid, folds=folds, lambda_grid=lambda_grid)[0]
