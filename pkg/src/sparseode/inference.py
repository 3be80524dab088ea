"""Post-selection confidence bands for fitted trajectory integrals.

The band covers, simultaneously over the plausible model family, the smoothed
integral curve at the observation times. For each candidate support M the
weights are refit by unpenalized least squares, the smoother A_M is rebuilt
under the fitted eta, and the cutoff c0 solves

    (1/N) sum_nu D_chi2(n)((c / c_nu)^2) = 1 - alpha,

where c_nu = max over models of |Atilde_{i.} V_nu| with V_nu uniform on the
unit sphere. Cutoffs are computed per time index; a max-over-time mode
returns one conservative global cutoff instead.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, ndtri

from .errors import (ConfigurationError, DegenerateSmootherError,
                     DimensionError, NumericalError)
from .gram import GramTensors
from .kernels import canonical_pairs, pair_slot
from .solver import _assemble_from_stack, _lasso_flat, qr_basis

C0_BRACKET_FACTOR = 10.0
C0_TOLERANCE = 1e-6
DEFAULT_DRAWS = 10_000
MIN_DRAWS = 1000
ALL_SUBSETS_LIMIT = 12
PATH_POINTS = 50
DRAW_CHUNK = 2000


@dataclass
class ModelFamily:
    """Candidate supports the cutoff maximizes over.

    Each model is a sorted tuple of canonical component indices. Provenance
    records how the family was built: every subset of the component set,
    supports visited along a kappa path, or an explicit list.
    """

    models: list
    provenance: str

    def __post_init__(self):
        if not self.models:
            raise ConfigurationError("model family must be nonempty")
        if self.provenance not in ("all_subsets", "lasso_path", "explicit"):
            raise ConfigurationError("unknown family provenance %r" % self.provenance)
        self.models = [tuple(sorted(int(i) for i in m)) for m in self.models]

    def __len__(self):
        return len(self.models)

    def requires(self, support):
        if tuple(sorted(int(i) for i in support)) not in self.models:
            raise ConfigurationError("family does not contain the selected support")


@dataclass
class ConfidenceBand:
    center: np.ndarray
    half_width: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    c0: np.ndarray
    sigma_hat: float
    alpha: float
    row_norms: np.ndarray
    mode: str
    cutoff: str
    family_size: int


def all_subsets_family(n_components):
    """Every subset of the component index set; only sane for small sets."""
    if n_components > ALL_SUBSETS_LIMIT:
        raise ConfigurationError(
            "all-subsets family needs <= %d components, got %d"
            % (ALL_SUBSETS_LIMIT, n_components)
        )
    models = []
    for mask in range(1 << n_components):
        models.append(tuple(i for i in range(n_components) if mask >> i & 1))
    return ModelFamily(models=models, provenance="all_subsets")


def lasso_path_family(z, G, n_points=PATH_POINTS, extra=()):
    """Distinct supports along a descending kappa path, plus any extras.

    The path starts just above the smallest kappa that zeroes every weight
    and descends four decades, warm-starting each solve from the previous.
    """
    z = np.asarray(z, dtype=float)
    G = np.asarray(G, dtype=float)
    n = z.shape[0]
    GtG, Gtz = G.T @ G, G.T @ z
    kappa_max = max(float(np.max(2.0 * Gtz)) / n, 1e-12)
    grid = np.geomspace(kappa_max * 1.001, kappa_max * 1e-4, n_points)
    seen, models = set(), []
    theta = None
    for kappa in grid:
        theta = _lasso_flat(GtG, Gtz, n, float(kappa), theta_start=theta)
        support = tuple(np.flatnonzero(theta > 0).tolist())
        if support not in seen:
            seen.add(support)
            models.append(support)
    for m in list(extra) + [()]:
        key = tuple(sorted(int(i) for i in m))
        if key not in seen:
            seen.add(key)
            models.append(key)
    return ModelFamily(models=models, provenance="lasso_path")


def build_family(fit, grams):
    """Default family: exhaustive below the subset limit, kappa path above."""
    ctx = refit_inputs(fit, grams)
    q = ctx["G"].shape[1]
    if q <= ALL_SUBSETS_LIMIT:
        return all_subsets_family(q)
    return lasso_path_family(ctx["z"], ctx["G"],
                             extra=[tuple(fit.support.tolist())])


def ls_refit(support, z, G):
    """Unpenalized, sign-unconstrained least squares restricted to a support.

    Both orientations of an interaction share one Gram column, so a support
    holding a mirror pair is rank-deficient by construction; the minimum-norm
    solution splits the weight evenly and leaves the fit unchanged. The
    warning fires only for deficiency beyond that expected duplication.
    """
    z = np.asarray(z, dtype=float)
    G = np.asarray(G, dtype=float)
    theta = np.zeros(G.shape[1])
    idx = np.asarray(sorted(int(i) for i in support), dtype=int)
    if idx.size == 0:
        return theta
    G_M = G[:, idx]
    coef, _, rank, _ = np.linalg.lstsq(G_M, z, rcond=None)
    if rank < len(_mirror_merged(idx, G.shape[1])):
        warnings.warn("rank-deficient refit support; pseudo-inverse solution used",
                      RuntimeWarning)
    theta[idx] = coef
    return theta


def _mirror_merged(idx, q):
    """Distinct components in a support after merging interaction mirrors."""
    p = int(round(np.sqrt(q)))
    if p * p != q:
        return set(int(i) for i in idx)
    pairs = canonical_pairs(p)
    keys = set()
    for m in idx:
        m = int(m)
        if m < p:
            keys.add(m)
        else:
            k, l = pairs[m - p]
            keys.add(p + pair_slot(p, min(k, l), max(k, l)))
    return keys


def sigma_hat(A_M, y_centered):
    """Residual-based noise scale: ||A y_c - y_c||^2 / tr(I - A)."""
    A_M = np.asarray(A_M, dtype=float)
    y_centered = np.asarray(y_centered, dtype=float)
    trace_gap = float(np.trace(np.eye(A_M.shape[0]) - A_M))
    if trace_gap <= 1e-8:
        raise DegenerateSmootherError(
            "tr(I - A) = %g; smoother is saturated, no residual degrees of freedom"
            % trace_gap
        )
    resid = A_M @ y_centered - y_centered
    return float(np.sqrt(max(float(resid @ resid) / trace_gap, 0.0)))


# ---------------------------------------------------------------------------
# cutoff machinery
# ---------------------------------------------------------------------------

def _chi2_cdf(x, dof):
    # regularized lower incomplete gamma; exact chi-square CDF
    return gammainc(0.5 * dof, 0.5 * np.asarray(x, dtype=float))

def _sphere_chunks(n_dim, n_draws, seed, chunk=DRAW_CHUNK):
    root = np.random.SeedSequence([int(seed), 523_987])
    n_chunks = (n_draws + chunk - 1) // chunk
    children = root.spawn(n_chunks)
    done = 0
    for k in range(n_chunks):
        m = min(chunk, n_draws - done)
        V = np.random.default_rng(children[k]).standard_normal((m, n_dim))
        norms = np.linalg.norm(V, axis=1)
        norms[norms == 0] = 1.0
        yield V / norms[:, None]
        done += m


def _max_row_projections(row_blocks, n_dim, n_draws, seed):
    """c_nu per (row-group, draw): max over stacked model rows of |row . V|.

    ``row_blocks`` is a list of (n_rows_i, n_dim) arrays sharing a common
    row count; the max runs over the list (the models), separately per row
    index and draw.
    """
    k = row_blocks[0].shape[0]
    stacked = np.vstack(row_blocks)
    out = np.empty((k, n_draws))
    done = 0
    for V in _sphere_chunks(n_dim, n_draws, seed):
        proj = np.abs(stacked @ V.T)
        proj = proj.reshape(len(row_blocks), k, V.shape[0])
        out[:, done:done + V.shape[0]] = proj.max(axis=0)
        done += V.shape[0]
    return out


def _bisect_cutoffs(c_nu, alpha, n_dim):
    """Solve mean_nu chi2_cdf((c/c_nu)^2, n) = 1 - alpha per leading row."""
    c_nu = np.maximum(np.atleast_2d(np.asarray(c_nu, dtype=float)), 1e-300)
    target = 1.0 - alpha
    hi_val = C0_BRACKET_FACTOR * np.sqrt(n_dim)
    k = c_nu.shape[0]
    lo = np.zeros(k)
    hi = np.full(k, hi_val)
    g_hi = _chi2_cdf((hi[:, None] / c_nu) ** 2, n_dim).mean(axis=1)
    if np.any(g_hi < target):
        bad = int(np.argmin(g_hi))
        raise NumericalError(
            "cutoff bracket [0, %g] does not cover 1-alpha=%g (reaches %g)"
            % (hi_val, target, g_hi[bad])
        )
    while float(np.max(hi - lo)) > C0_TOLERANCE:
        mid = 0.5 * (lo + hi)
        g_mid = _chi2_cdf((mid[:, None] / c_nu) ** 2, n_dim).mean(axis=1)
        take_hi = g_mid >= target
        hi = np.where(take_hi, mid, hi)
        lo = np.where(take_hi, lo, mid)
    return 0.5 * (lo + hi)


def c0_compute(model_family, A_rows_per_model, alpha, n, n_draws=DEFAULT_DRAWS, seed=0):
    """Monte-Carlo cutoff for one set of normalized smoother rows per model.

    The maximum runs over every row supplied, so passing one row per model
    gives a single-time cutoff and passing all rows gives the conservative
    max-over-time cutoff.
    """
    if not 0 < alpha < 1:
        raise ConfigurationError("alpha must lie in (0, 1)")
    if n_draws < MIN_DRAWS:
        raise ConfigurationError("need at least %d draws" % MIN_DRAWS)
    if len(A_rows_per_model) != len(model_family):
        raise DimensionError("one row block per family model required")
    rows = np.vstack([np.atleast_2d(np.asarray(b, dtype=float))
                      for b in A_rows_per_model])
    if rows.shape[1] != n:
        raise DimensionError("rows must live in dimension n=%d" % n)
    c_nu = np.empty((1, n_draws))
    done = 0
    for V in _sphere_chunks(n, n_draws, seed):
        c_nu[0, done:done + V.shape[0]] = np.max(np.abs(rows @ V.T), axis=0)
        done += V.shape[0]
    return float(_bisect_cutoffs(c_nu, alpha, n)[0])


# ---------------------------------------------------------------------------
# band assembly
# ---------------------------------------------------------------------------

def refit_inputs(fit, grams):
    """Reconstruct the theta-step design (z, G) and QR pieces from a fit."""
    gram_list = [grams] if isinstance(grams, GramTensors) else list(grams)
    n = gram_list[0].n
    R = len(gram_list)
    N = R * n
    yc = np.asarray(fit.y_centered, dtype=float)
    if yc.shape != (N,):
        raise DimensionError("fit and Gram tensors disagree on the row count")
    B_stack = np.concatenate([g.B for g in gram_list])
    Q1, Q2, r_diag = qr_basis(B_stack)
    stacks = [g.stacked() for g in gram_list]
    G = np.vstack([np.einsum("mij,j->im", stacks[r], fit.c[r * n:(r + 1) * n])
                   for r in range(R)])
    z = yc - 0.5 * N * fit.eta * fit.c - B_stack * fit.b
    return {
        "gram_list": gram_list, "stacks": stacks, "n": n, "R": R, "N": N,
        "yc": yc, "B": B_stack, "Q1": Q1, "Q2": Q2, "r_diag": r_diag,
        "z": z, "G": G,
    }


def _reduced_components(ctx):
    """Q2' Sigma^m Q2 per component, summed over replicate blocks."""
    Q2, n, R = ctx["Q2"], ctx["n"], ctx["R"]
    q = ctx["stacks"][0].shape[0]
    comps = np.zeros((q, ctx["N"] - 1, ctx["N"] - 1))
    for r in range(R):
        Q2r = Q2[r * n:(r + 1) * n]
        for m in range(q):
            comps[m] += Q2r.T @ ctx["stacks"][r][m] @ Q2r
    return comps


def _model_smoother(theta_flat, ctx, reduced, eta):
    N = ctx["N"]
    S = N * eta * np.eye(N - 1)
    for m in np.flatnonzero(theta_flat):
        S += theta_flat[m] * reduced[m]
    try:
        X = np.linalg.solve(S, ctx["Q2"].T)
    except np.linalg.LinAlgError:
        raise NumericalError(
            "model smoother solve is singular; increase eta"
        ) from None
    return np.eye(N) - N * eta * (ctx["Q2"] @ X)


def _representer_center(theta_flat, ctx, eta):
    """Center via the representer expansion: B b + Sigma(theta) c at the refit."""
    N, n, R = ctx["N"], ctx["n"], ctx["R"]
    sigma_blocks = [_assemble_from_stack(ctx["stacks"][r], theta_flat)
                    for r in range(R)]
    W = np.zeros((N, N))
    for r in range(R):
        W[r * n:(r + 1) * n, r * n:(r + 1) * n] = sigma_blocks[r]
    Wfull = W + N * eta * np.eye(N)
    Q2 = ctx["Q2"]
    S = Q2.T @ Wfull @ Q2
    sol = np.linalg.solve(S, Q2.T @ ctx["yc"])
    c = Q2 @ sol
    b = float(ctx["Q1"].T @ (ctx["yc"] - Wfull @ c)) / ctx["r_diag"]
    center = ctx["B"] * b + W @ c
    return center, b, c


def confidence_band(fit, model_family, grams, alpha=0.05, n_draws=DEFAULT_DRAWS,
                    seed=0, mode="per-time", cutoff="selective"):
    """Assemble the post-selection band for one fitted equation.

    ``cutoff="naive"`` swaps c0 for the single-model normal quantile, which
    ignores selection; it exists for the coverage comparison.
    """
    if not 0 < alpha < 1:
        raise ConfigurationError("alpha must lie in (0, 1)")
    if mode not in ("per-time", "max-over-time"):
        raise ConfigurationError("unknown cutoff mode %r" % mode)
    if cutoff not in ("selective", "naive"):
        raise ConfigurationError("unknown cutoff kind %r" % cutoff)
    if n_draws < MIN_DRAWS:
        raise ConfigurationError("need at least %d draws" % MIN_DRAWS)
    ctx = refit_inputs(fit, grams)
    N = ctx["N"]
    selected = tuple(fit.support.tolist())
    model_family.requires(selected)

    reduced = _reduced_components(ctx)
    theta_sel = ls_refit(selected, ctx["z"], ctx["G"])
    A_sel = _model_smoother(theta_sel, ctx, reduced, fit.eta)
    center, _, _ = _representer_center(theta_sel, ctx, fit.eta)
    sig = sigma_hat(A_sel, ctx["yc"])
    row_norms = np.linalg.norm(A_sel, axis=1)

    if cutoff == "naive":
        c0 = np.full(N, float(ndtri(1.0 - alpha / 2.0)))
    else:
        blocks = []
        for M in model_family.models:
            if M == selected:
                A = A_sel
            else:
                A = _model_smoother(ls_refit(M, ctx["z"], ctx["G"]), ctx,
                                    reduced, fit.eta)
            norms = np.linalg.norm(A, axis=1)
            norms[norms == 0] = 1.0
            blocks.append(A / norms[:, None])
        c_nu = _max_row_projections(blocks, N, n_draws, seed)
        if mode == "max-over-time":
            c0 = np.full(N, float(_bisect_cutoffs(c_nu.max(axis=0)[None, :],
                                                  alpha, N)[0]))
        else:
            c0 = _bisect_cutoffs(c_nu, alpha, N)

    half = c0 * sig * row_norms
    return ConfidenceBand(
        center=center, half_width=half, lower=center - half, upper=center + half,
        c0=c0, sigma_hat=sig, alpha=alpha, row_norms=row_norms, mode=mode,
        cutoff=cutoff, family_size=len(model_family),
    )
