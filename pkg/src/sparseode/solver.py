"""Alternating estimation of one ODE equation's right-hand side.

Per equation j the loss is

    (1/n) sum_i (y_ij - theta_j0 - int_0^{t_i} F_j(xhat(t)) dt)^2
        + eta * sum_m theta_m^{-1} ||P^m F_j||^2 + kappa * sum_m theta_m,

over intercept theta_j0, component weights theta >= 0, and F_j in the
weighted space. Three exact block updates alternate:

  1. intercept:  theta_j0 = ybar - int Tbar(t) Fhat(xhat(t)) dt
  2. F-step:     with W = Sigma(theta) + n*eta*I and B = [Q1 Q2][R 0]^T:
                 c = Q2 (Q2' W Q2)^{-1} Q2' (y - ybar),
                 b = R^{-1} Q1' (y - ybar - W c)
  3. theta-step: nonnegative lasso on z = (y - ybar) - (n*eta/2) c - B b
                 against G = [Sigma^1 c, ..., Sigma^kl c, ...]

eta is re-selected by GCV and kappa by K-fold CV inside every outer
iteration. Convergence is declared on relative parameter change, not on the
objective, because re-tuned penalties can wiggle the objective slightly.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import (ConditioningError, ConfigurationError, DimensionError,
                     NumericalError)
from .gram import GramTensors
from .kernels import ThetaVector

DEFAULT_ETA_GRID = np.logspace(-6.0, 0.0, 20)
DEFAULT_KAPPA_GRID = np.logspace(-6.0, 0.0, 20)

LASSO_TOL = 1e-10
LASSO_MAX_SWEEPS = 100_000
CD_STALL_SWEEPS = 2_000


@dataclass
class SolverConfig:
    max_iterations: int = 10
    block_tolerance: float = 1e-6
    eta_grid: np.ndarray = field(default_factory=lambda: DEFAULT_ETA_GRID.copy())
    kappa_grid: np.ndarray = field(default_factory=lambda: DEFAULT_KAPPA_GRID.copy())
    cv_folds: int = 10
    theta_init: float = 1.0
    record_block_objectives: bool = False

    def __post_init__(self):
        self.eta_grid = np.sort(np.asarray(self.eta_grid, dtype=float))
        self.kappa_grid = np.sort(np.asarray(self.kappa_grid, dtype=float))
        if self.eta_grid.size == 0 or np.any(self.eta_grid <= 0):
            raise ConfigurationError("eta grid must be positive and nonempty")
        if self.kappa_grid.size == 0 or np.any(self.kappa_grid < 0):
            raise ConfigurationError("kappa grid must be nonnegative and nonempty")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")


@dataclass
class EquationFit:
    """Converged state of one equation's alternating fit.

    ``c`` has length R*n for R stacked replicates. ``support`` lists
    canonical component indices with strictly positive weight.
    ``block_objectives`` is populated only when the config asks for it
    ((iteration, stage, objective) triples for the monotonicity check).
    """

    theta0: float
    b: float
    c: np.ndarray
    theta: ThetaVector
    eta: float
    kappa: float
    support: np.ndarray
    iterations: int
    objective_trace: np.ndarray
    converged: bool
    y_mean: float
    y_centered: np.ndarray = None
    collinearity_main: np.ndarray = None
    collinearity_inter: np.ndarray = None
    collinearity_flag: bool = False
    replicates: int = 1
    block_objectives: list = None


# ---------------------------------------------------------------------------
# closed-form F-step
# ---------------------------------------------------------------------------

def qr_basis(B):
    """Complete QR of the column B: returns (Q1, Q2, r) with B = Q1 * r."""
    B = np.asarray(B, dtype=float)
    if np.all(B == 0):
        raise ConditioningError("B is identically zero; need at least two distinct times")
    Q, R = np.linalg.qr(B[:, None], mode="complete")
    return Q[:, :1], Q[:, 1:], float(R[0, 0])


def solve_f_step(sigma_theta, B, y_centered, eta):
    """Exact minimizer (b, c) of (1/n)||y_c - B b - Sigma c||^2 + eta c'Sigma c."""
    sigma_theta = np.asarray(sigma_theta, dtype=float)
    y_centered = np.asarray(y_centered, dtype=float)
    n = y_centered.shape[0]
    if not eta > 0:
        raise ConfigurationError("eta must be positive")
    Q1, Q2, r = qr_basis(B)
    W = sigma_theta + n * eta * np.eye(n)
    S = Q2.T @ W @ Q2
    try:
        sol = np.linalg.solve(S, Q2.T @ y_centered)
    except np.linalg.LinAlgError:
        raise ConditioningError(
            "Q2' W Q2 is numerically singular; increase eta to restore identifiability"
        ) from None
    c = Q2 @ sol
    if not np.all(np.isfinite(c)):
        raise ConditioningError(
            "F-step solve produced non-finite coefficients; increase eta"
        )
    b = float((Q1.T @ (y_centered - W @ c))[0]) / r
    return b, c


def smoothing_matrix(eta, sigma_theta, Q2):
    """A(eta) = I - n*eta*Q2 (Q2' W Q2)^{-1} Q2' with W = Sigma + n*eta*I."""
    sigma_theta = np.asarray(sigma_theta, dtype=float)
    n = sigma_theta.shape[0]
    S = Q2.T @ sigma_theta @ Q2 + n * eta * np.eye(n - 1)
    try:
        X = np.linalg.solve(S, Q2.T)
    except np.linalg.LinAlgError:
        raise ConditioningError(
            "smoothing matrix solve is singular; increase eta"
        ) from None
    return np.eye(n) - n * eta * (Q2 @ X)


def gcv_eta(sigma_theta, B, y_centered, eta_grid=None):
    """Grid argmin of ||A(eta)y_c - y_c||^2 / [n^{-1} tr(I - A(eta))]^2.

    Ties resolve toward the larger eta. All candidates share one
    eigendecomposition of Q2' Sigma Q2.
    """
    grid = DEFAULT_ETA_GRID if eta_grid is None else np.asarray(eta_grid, dtype=float)
    if grid.size == 0:
        raise ConfigurationError("eta grid must be nonempty")
    y_centered = np.asarray(y_centered, dtype=float)
    _, Q2, _ = qr_basis(B)
    evals, v = _reduced_spectrum([sigma_theta], Q2, y_centered)
    n = y_centered.shape[0]
    best, best_score = None, np.inf
    for eta in np.sort(grid):
        score = _gcv_from_spectrum(evals, v, n, eta)
        if np.isfinite(score) and score <= best_score:
            best, best_score = float(eta), score
    if best is None:
        raise ConditioningError("GCV failed at every eta on the grid; enlarge the grid")
    return best


def _reduced_spectrum(sigma_blocks, Q2, y_centered):
    """Eigen-pairs of Q2' blkdiag(Sigma_r) Q2 plus the rotated data vector."""
    N = Q2.shape[0]
    n = N // len(sigma_blocks)
    S0 = np.zeros((N - 1, N - 1))
    for r, sig in enumerate(sigma_blocks):
        Q2r = Q2[r * n:(r + 1) * n]
        S0 += Q2r.T @ sig @ Q2r
    try:
        evals, U = np.linalg.eigh(S0)
    except np.linalg.LinAlgError:
        raise ConditioningError("eigendecomposition of the reduced system failed") from None
    evals = np.maximum(evals, 0.0)
    v = U.T @ (Q2.T @ y_centered)
    return (evals, U), v


def _gcv_from_spectrum(eig_pair, v, n, eta):
    evals, _ = eig_pair
    shrink = n * eta / (evals + n * eta)
    rss = float(np.sum((shrink * v) ** 2))
    denom = float(np.sum(shrink)) / n
    if denom <= 0:
        return np.inf
    return rss / denom ** 2


# ---------------------------------------------------------------------------
# nonnegative lasso theta-step
# ---------------------------------------------------------------------------

@njit(cache=True)
def _cd_nonneg(GtG, Gtz, half_penalty, theta, tol, max_sweeps):
    q = theta.shape[0]
    rho = Gtz - GtG @ theta
    for sweep in range(max_sweeps):
        max_delta = 0.0
        for m in range(q):
            d = GtG[m, m]
            old = theta[m]
            if d <= 0.0:
                new = 0.0
            else:
                new = (rho[m] + d * old - half_penalty) / d
                if new < 0.0:
                    new = 0.0
            if new != old:
                delta = new - old
                for i in range(q):
                    rho[i] -= GtG[i, m] * delta
                theta[m] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if max_delta <= tol:
            return sweep + 1
    return -1


def _face_pursuit(GtG, Gtz, half_penalty, theta):
    """Exact minimizer of the penalized quadratic on the nonnegative orthant.

    Active-set refinement used when coordinate descent stalls on a collinear
    design: solve each face exactly through an eigendecomposition (minimum-norm
    on degenerate faces), walk descending null directions to the boundary,
    truncate steps that would leave the orthant, and admit the worst
    gradient violator. Every tie-break is index-based, so the result is
    deterministic. Returns an updated copy of theta.
    """
    q = Gtz.shape[0]
    theta = theta.copy()
    active = [m for m in range(q) if theta[m] > 0.0]
    scale = float(np.max(np.abs(Gtz))) + half_penalty + 1.0
    for _ in range(50 * (q + 1)):
        if active:
            idx = np.array(active)
            Q = GtG[np.ix_(idx, idx)]
            h = Gtz[idx] - half_penalty
            evals, evecs = np.linalg.eigh(Q)
            cut = max(float(evals[-1]), 0.0) * 1e-12
            null = evals <= cut
            h_rot = evecs.T @ h
            null_mass = float(np.linalg.norm(h_rot[null])) if null.any() else 0.0
            if null_mass > 1e-9 * scale:
                # objective decreases linearly along this null direction;
                # follow it until a coordinate hits the boundary
                v = evecs[:, null] @ h_rot[null]
                v /= np.linalg.norm(v)
                falling = v < 0
                if not falling.any():
                    break
                steps = theta[idx[falling]] / -v[falling]
                t = float(np.min(steps))
                theta[idx] += t * v
                theta[idx[falling]] = np.maximum(theta[idx[falling]], 0.0)
                hit = idx[falling][steps <= t * (1 + 1e-12)]
                theta[hit] = 0.0
                active = [m for m in active if theta[m] > 0.0]
                continue
            inv = np.where(null, 0.0, 1.0 / np.where(null, 1.0, evals))
            target = evecs @ (inv * h_rot)
            if np.all(target >= 0.0):
                theta[idx] = target
                active = [m for m in active if theta[m] > 0.0]
            else:
                d = target - theta[idx]
                falling = d < 0
                steps = theta[idx[falling]] / -d[falling]
                t = min(1.0, float(np.min(steps)))
                theta[idx] += t * d
                theta[idx] = np.maximum(theta[idx], 0.0)
                hit = idx[falling][steps <= t * (1 + 1e-12)]
                theta[hit] = 0.0
                active = [m for m in active if theta[m] > 0.0]
                continue
        grad_gap = Gtz - GtG[:, active] @ theta[active] if active else Gtz.copy()
        grad_gap -= half_penalty
        grad_gap[active] = 0.0
        worst = int(np.argmax(grad_gap))
        if grad_gap[worst] <= 1e-12 * scale:
            return theta
        active = sorted(active + [worst])
    return theta


def _lasso_flat(GtG, Gtz, n_rows, kappa, theta_start=None):
    q = Gtz.shape[0]
    theta = np.zeros(q) if theta_start is None else theta_start.copy()
    GtG_c = np.ascontiguousarray(GtG)
    Gtz_c = np.ascontiguousarray(Gtz)
    half = 0.5 * n_rows * kappa
    budget = LASSO_MAX_SWEEPS
    # plain cyclic descent first; on a stall, refine the active face exactly
    # and let a final sweep certify the coordinate-change criterion
    for stage in range(3):
        cap = budget if stage == 2 else min(CD_STALL_SWEEPS, budget)
        sweeps = _cd_nonneg(GtG_c, Gtz_c, half, theta, LASSO_TOL, cap)
        if sweeps >= 0:
            return theta
        budget -= cap
        if budget <= 0 or stage == 2:
            break
        theta = _face_pursuit(GtG, Gtz, half, theta)
    raise NumericalError(
        "coordinate descent did not converge in %d sweeps (kappa=%g, %d columns)"
        % (LASSO_MAX_SWEEPS, kappa, q)
    )


def lasso_theta_step(z, G, kappa):
    """Minimize ||z - G theta||^2 + n*kappa*sum(theta) over theta >= 0.

    Cyclic coordinate descent with the nonnegative soft-threshold update,
    coordinates visited in canonical order; converged when the largest
    coordinate change in a sweep is <= 1e-10. Returns the flat weight
    vector (one entry per column of G).
    """
    z = np.asarray(z, dtype=float)
    G = np.asarray(G, dtype=float)
    if G.shape[0] != z.shape[0]:
        raise DimensionError("z and G row counts differ")
    if kappa < 0:
        raise ConfigurationError("kappa must be nonnegative")
    return _lasso_flat(G.T @ G, G.T @ z, z.shape[0], float(kappa))


def cv_kappa(z, G, kappa_grid=None, folds=10, seed=0):
    """K-fold CV over the rows of (z, G); ties resolve toward larger kappa.

    Fold assignment is a seeded permutation split into near-equal blocks, so
    the selection is reproducible from the seed alone.
    """
    grid = DEFAULT_KAPPA_GRID if kappa_grid is None else np.asarray(kappa_grid, dtype=float)
    if grid.size == 0:
        raise ConfigurationError("kappa grid must be nonempty")
    grid = np.sort(grid)
    if grid.size == 1:
        return float(grid[0])
    z = np.asarray(z, dtype=float)
    G = np.asarray(G, dtype=float)
    n = z.shape[0]
    if folds < 2:
        raise ConfigurationError("need at least 2 folds")
    if folds > n:
        raise ConfigurationError("folds (%d) exceed the number of rows (%d)" % (folds, n))
    rng = np.random.default_rng(seed)
    blocks = np.array_split(rng.permutation(n), folds)
    errors = np.zeros(grid.size)
    for test_idx in blocks:
        mask = np.ones(n, dtype=bool)
        mask[test_idx] = False
        G_tr, z_tr = G[mask], z[mask]
        G_te, z_te = G[test_idx], z[test_idx]
        GtG, Gtz = G_tr.T @ G_tr, G_tr.T @ z_tr
        n_tr = int(mask.sum())
        theta = None
        # descend the grid so each solve warm-starts from a sparser one
        for gi in range(grid.size - 1, -1, -1):
            theta = _lasso_flat(GtG, Gtz, n_tr, grid[gi], theta_start=theta)
            resid = z_te - G_te @ theta
            errors[gi] += float(resid @ resid)
    best, best_err = None, np.inf
    for gi in range(grid.size):
        if errors[gi] <= best_err:
            best, best_err = float(grid[gi]), errors[gi]
    return best


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def update_theta0(f_hat_integral_mean, y_bar):
    """Intercept update: theta_0 = ybar - int Tbar(t) Fhat(xhat(t)) dt."""
    return float(y_bar) - float(f_hat_integral_mean)


def component_norm(theta, grams, c, index):
    """RKHS norm of one fitted component: theta_m * sqrt(c' Sigma^m c)."""
    flat = theta.flat() if isinstance(theta, ThetaVector) else np.asarray(theta, dtype=float)
    w = flat[index]
    if w == 0.0:
        return 0.0
    quad = _component_quad(grams, c, index)
    if quad < -1e-10:
        raise NumericalError("c' Sigma c is negative (%g); Gram tensors corrupt" % quad)
    return float(w * np.sqrt(max(quad, 0.0)))


def _component_quad(grams, c, index):
    if isinstance(grams, GramTensors):
        grams = [grams]
    n = grams[0].n
    total = 0.0
    for r, g in enumerate(grams):
        cr = c[r * n:(r + 1) * n]
        total += float(cr @ (g.component(index) @ cr))
    return total


def collinearity_indices(fit, grams, threshold=10.0):
    """Square roots of the diagonal of the inverse component-cosine matrix.

    Components with zero sample norm are excluded (their entries are NaN);
    a single active component gets index 1 by convention. A singular cosine
    matrix reports +inf for the active components and sets the flag.
    """
    if isinstance(grams, GramTensors):
        grams = [grams]
    p = grams[0].p
    flat = fit.theta.flat()
    n = grams[0].n
    vectors, active = [], []
    for m in range(p * p):
        if flat[m] <= 0:
            continue
        g_m = flat[m] * np.concatenate([g.component(m) @ fit.c[r * n:(r + 1) * n]
                                        for r, g in enumerate(grams)])
        norm = np.linalg.norm(g_m)
        if norm > 0:
            vectors.append(g_m / norm)
            active.append(m)
    out = np.full(p * p, np.nan)
    flagged = False
    if len(active) == 1:
        out[active[0]] = 1.0
    elif len(active) > 1:
        V = np.array(vectors)
        cosine = V @ V.T
        try:
            inv = np.linalg.inv(cosine)
            diag = np.maximum(np.diag(inv), 0.0)
            indices = np.sqrt(diag)
        except np.linalg.LinAlgError:
            indices = np.full(len(active), np.inf)
        if not np.all(np.isfinite(indices)):
            flagged = True
        elif np.any(indices > threshold):
            flagged = True
        out[np.array(active)] = indices
    return out[:p], out[p:], flagged


# ---------------------------------------------------------------------------
# the alternating fit
# ---------------------------------------------------------------------------

def _assemble_from_stack(stack, theta_flat):
    nz = np.flatnonzero(theta_flat)
    q, n, _ = stack.shape
    if nz.size == 0:
        return np.zeros((n, n))
    if nz.size <= q // 4:
        out = np.zeros((n, n))
        for m in nz:
            out += theta_flat[m] * stack[m]
        return out
    return np.tensordot(theta_flat, stack, axes=1)


def _check_common_grid(gram_list):
    u0 = gram_list[0].u_times
    for g in gram_list[1:]:
        if g.u_times.shape != u0.shape or np.any(g.u_times != u0):
            raise DimensionError("replicates must share one observation grid")


def _relative_change(new, old):
    new = np.atleast_1d(np.asarray(new, dtype=float))
    old = np.atleast_1d(np.asarray(old, dtype=float))
    return np.linalg.norm(new - old) / (np.linalg.norm(old) + 1e-12)


def fit_equation(y, grams, config=None, seed=0, equation_index=0):
    """Fit one equation from a single experiment; see fit_equation_multi."""
    return fit_equation_multi([np.asarray(y, dtype=float)], [grams], config,
                              seed=seed, equation_index=equation_index)


def fit_equation_multi(ys, gram_list, config=None, seed=0, equation_index=0):
    """Alternating fit of one equation over R stacked replicate systems.

    ``ys`` holds one observation column per replicate; ``gram_list`` the
    matching per-replicate Gram tensors on a common grid. The stacked system
    of N = R*n rows is solved by the same closed forms with per-replicate
    centering; R = 1 reduces to the single-experiment estimator exactly.
    """
    config = SolverConfig() if config is None else config
    R = len(ys)
    if R != len(gram_list) or R < 1:
        raise DimensionError("need one Gram set per replicate")
    _check_common_grid(gram_list)
    n = gram_list[0].n
    p = gram_list[0].p
    ys = [np.asarray(y, dtype=float) for y in ys]
    for y in ys:
        if y.shape != (n,):
            raise DimensionError("each replicate's y must have length n=%d" % n)
    N = R * n
    y_all = np.concatenate(ys)
    ybar_global = float(y_all.mean())
    yc = np.concatenate([y - y.mean() for y in ys])
    B_stack = np.concatenate([g.B for g in gram_list])
    Q1, Q2, r_diag = qr_basis(B_stack)
    stacks = [g.stacked() for g in gram_list]
    tbars = [g.tbar_sigma for g in gram_list]
    u_means = [g.u_mean for g in gram_list]

    rng_fold_seed = [int(seed), int(equation_index), 7]

    theta_flat = np.full(p * p, float(config.theta_init))
    b = 0.0
    c = np.zeros(N)
    theta0 = ybar_global
    eta = float(config.eta_grid[-1])
    kappa = float(config.kappa_grid[-1])
    trace = []
    block_objs = [] if config.record_block_objectives else None
    converged = False
    iterations = 0

    def objective(theta_f, b_v, c_v, eta_v, kappa_v, G_v):
        fit_part = G_v @ theta_f
        resid = yc - B_stack * b_v - fit_part
        return float(resid @ resid) / N + eta_v * float(c_v @ fit_part) \
            + kappa_v * float(theta_f.sum())

    def build_G(c_v):
        cols = [np.einsum("mij,j->im", stacks[r], c_v[r * n:(r + 1) * n])
                for r in range(R)]
        return np.vstack(cols)

    for it in range(1, config.max_iterations + 1):
        iterations = it
        theta_prev = theta_flat.copy()
        b_prev, c_prev, theta0_prev = b, c.copy(), theta0

        # intercept given the current functional
        tbar_int = np.mean([
            b * u_means[r] + float(theta_flat @ (tbars[r] @ c[r * n:(r + 1) * n]))
            for r in range(R)
        ])
        theta0 = update_theta0(tbar_int, ybar_global)

        # F-step with GCV-selected eta on Sigma(theta)
        sigma_blocks = [_assemble_from_stack(stacks[r], theta_flat) for r in range(R)]
        eig_pair, v = _reduced_spectrum(sigma_blocks, Q2, yc)
        best, best_score = None, np.inf
        for cand in config.eta_grid:
            score = _gcv_from_spectrum(eig_pair, v, N, cand)
            if np.isfinite(score) and score <= best_score:
                best, best_score = float(cand), score
        if best is None:
            raise ConditioningError(
                "GCV failed across the eta grid at iteration %d; enlarge the grid" % it
            )
        eta = best
        evals, U = eig_pair
        c = Q2 @ (U @ (v / (evals + N * eta)))
        Wc = np.concatenate([sigma_blocks[r] @ c[r * n:(r + 1) * n] for r in range(R)]) \
            + N * eta * c
        b = float((Q1.T @ (yc - Wc))[0]) / r_diag
        G = build_G(c)
        if block_objs is not None:
            block_objs.append((it, "f_step", objective(theta_flat, b, c, eta, kappa, G)))

        # theta-step with CV-selected kappa
        z = yc - 0.5 * N * eta * c - B_stack * b
        if config.kappa_grid.size == 1:
            kappa = float(config.kappa_grid[0])
        else:
            kappa = cv_kappa(z, G, config.kappa_grid, folds=config.cv_folds,
                             seed=rng_fold_seed)
        theta_flat = _lasso_flat(G.T @ G, G.T @ z, N, kappa)
        if block_objs is not None:
            block_objs.append((it, "theta_step", objective(theta_flat, b, c, eta, kappa, G)))

        trace.append(objective(theta_flat, b, c, eta, kappa, G))

        changes = [
            _relative_change(theta_flat, theta_prev),
            _relative_change(b, b_prev),
            _relative_change(c, c_prev),
            _relative_change(theta0, theta0_prev),
        ]
        if max(changes) < config.block_tolerance:
            converged = True
            break

    theta = ThetaVector.from_flat(theta_flat, p)
    fit = EquationFit(
        theta0=theta0, b=b, c=c, theta=theta, eta=eta, kappa=kappa,
        support=np.flatnonzero(theta_flat > 0), iterations=iterations,
        objective_trace=np.asarray(trace), converged=converged,
        y_mean=ybar_global, y_centered=yc, replicates=R,
        block_objectives=block_objs,
    )
    cm, ci, flag = collinearity_indices(fit, gram_list)
    fit.collinearity_main, fit.collinearity_inter, fit.collinearity_flag = cm, ci, flag
    return fit
