"""Integral operators of the estimation problem.

The fitting loss is written against cumulative-integral functionals of the
right-hand side F. With indicator weights T_i(t) = 1{0 <= t <= t_i} and their
mean Tbar, the building blocks are

    B_i        = integral of (T_i - Tbar),
    Sigma^k    [i, i'] = double integral of (T_i - Tbar)(s) K_k(xhat(t), xhat(s)) (T_i' - Tbar)(t),
    Sigma^kl   = same with the product kernel K_k * K_l,

all over the standardized interval [0, 1]. The weighted combination
Sigma(theta) is an exact linear combination of the component matrices.

Quadrature: the indicator factors are piecewise constant with jumps at the
observation times, which generally fall between uniform grid nodes. Each
weight row therefore integrates its step factor exactly — full cells carry
plain trapezoid weights and the partial cell ending at t_i carries
linear-interpolation weights on its two bracketing nodes — leaving only the
O(delta^2) trapezoid error of the smooth kernel factor. A Monte-Carlo scheme
with one shared node set per matrix is available for parity with stochastic
integration protocols.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, DomainError
from .kernels import canonical_pairs, kernel_matrix, kernel_values
from .trajectory import evaluate_trajectory

MIN_TRAPEZOID_NODES = 16
DEFAULT_NODES = 200
DEFAULT_MC_DRAWS = 1000


@dataclass(frozen=True)
class QuadratureSpec:
    """Integration scheme for the double integrals.

    ``trapezoid_grid`` uses ``nodes_per_axis`` uniform nodes (deterministic,
    the default); ``monte_carlo`` uses ``draws`` uniform draws seeded per
    matrix from ``seed``.
    """

    scheme: str = "trapezoid_grid"
    nodes_per_axis: int = DEFAULT_NODES
    draws: int = DEFAULT_MC_DRAWS
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in ("trapezoid_grid", "monte_carlo"):
            raise ConfigurationError("unknown quadrature scheme %r" % (self.scheme,))
        if self.scheme == "trapezoid_grid" and self.nodes_per_axis < MIN_TRAPEZOID_NODES:
            raise ConfigurationError(
                "trapezoid grid needs at least %d nodes per axis" % MIN_TRAPEZOID_NODES
            )
        if self.scheme == "monte_carlo" and self.draws < 2:
            raise ConfigurationError("monte_carlo needs at least 2 draws")


def standardize_times(times, span=None):
    """Map raw times onto [0, 1]: u = t / span, span defaulting to the last time."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ConfigurationError("times must be nonnegative")
    if span is None:
        span = float(times[-1])
    if not span > 0:
        raise ConfigurationError("time span must be positive")
    if np.any(times > span * (1 + 1e-12)):
        raise ConfigurationError("times exceed the declared span")
    return times / span, float(span)


def build_B(times, span):
    """Closed-form B_i = t_i - mean(t); the span only bounds the times."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(times > span * (1 + 1e-12)):
        raise ConfigurationError("times must lie in [0, span]")
    return times - times.mean()


def _trapezoid_step_weights(u_times, nodes):
    """Rows of node weights integrating g over [0, u_i] with the step handled
    exactly: sum_a W[i, a] g(nodes[a]) ~ int_0^{u_i} g, with row sums equal to
    u_i up to rounding."""
    m = nodes.shape[0]
    delta = nodes[1] - nodes[0]
    n = u_times.shape[0]
    W = np.zeros((n, m))
    for i, u in enumerate(u_times):
        a = int(np.floor((u - nodes[0]) / delta + 1e-12))
        a = min(max(a, 0), m - 1)
        if a > 0:
            W[i, : a + 1] = delta
            W[i, 0] = 0.5 * delta
            W[i, a] = 0.5 * delta
        zeta = (u - nodes[a]) / delta
        if zeta > 1e-12 and a + 1 < m:
            W[i, a] += zeta * delta * (1.0 - 0.5 * zeta)
            W[i, a + 1] += zeta * delta * (0.5 * zeta)
    return W


def _node_context(u_times, quadrature, tag):
    """Quadrature nodes, raw indicator weight rows, and full-interval weights.

    ``tag`` seeds the Monte-Carlo stream so each matrix gets an independent
    node set; trapezoid ignores it. The last element integrates a smooth
    function over the whole interval (used as the trajectory measure when
    centering kernels).
    """
    u_max = float(u_times[-1])
    if quadrature.scheme == "trapezoid_grid":
        nodes = np.linspace(0.0, u_max, quadrature.nodes_per_axis)
        raw = _trapezoid_step_weights(u_times, nodes)
        delta = (nodes[-1] - nodes[0]) / (nodes.shape[0] - 1)
        full = np.full(nodes.shape[0], delta)
        full[0] = full[-1] = 0.5 * delta
    else:
        rng = np.random.default_rng([int(quadrature.seed), int(tag)])
        nodes = np.sort(rng.uniform(0.0, u_max, quadrature.draws))
        raw = (u_times[:, None] >= nodes[None, :]) * (u_max / quadrature.draws)
        full = np.full(nodes.shape[0], u_max / quadrature.draws)
    return nodes, raw, full


def _centered_rows(raw):
    tbar = raw.mean(axis=0)
    return raw - tbar[None, :], tbar


def _center_grid(grid, full_weights):
    """Enforce the zero-marginal-integral side condition on a kernel grid.

    Subtracts the trajectory-measure marginal means so the component space
    is orthogonal to constants along the fitted trajectory; interactions
    built from centered factors are then orthogonal to both main effects.
    Returns the centered grid with the marginal mean vector and total mean.
    """
    mass = float(full_weights.sum())
    marginal = (grid @ full_weights) / mass
    total = float(marginal @ full_weights) / mass
    return grid - marginal[:, None] - marginal[None, :] + total, marginal, total


def _grid_values(traj_fits, nodes, coords):
    return {k: evaluate_trajectory(traj_fits[k], nodes) for k in coords}


def kernel_cross(spec, values_a, values_b):
    """Kernel matrix between two point sets of one coordinate's values."""
    if spec.family == "linear":
        lo, hi = spec.rescale
        ga = (np.asarray(values_a, dtype=float) - lo) / (hi - lo) - 0.5
        gb = (np.asarray(values_b, dtype=float) - lo) / (hi - lo) - 0.5
        return np.outer(ga, gb)
    return kernel_matrix(spec, values_a, values_b)


def _kernel_grid(spec, values):
    return kernel_cross(spec, values, values)


def _sigma_from_grid(W, grid):
    sigma = W @ grid @ W.T
    return 0.5 * (sigma + sigma.T)


def build_sigma_main(traj_fits, kernel_k, k, quadrature, center=True):
    """Main-effect Gram matrix for coordinate k over the fitted trajectories.

    ``center`` applies the zero-marginal-integral side condition to the
    kernel (the identifiability convention of the component space); pass
    False for the plain double integral of the raw kernel.
    """
    u_times = np.asarray(traj_fits[k].times, dtype=float)
    nodes, raw, full = _node_context(u_times, quadrature, k)
    W, _ = _centered_rows(raw)
    vals = evaluate_trajectory(traj_fits[k], nodes)
    grid = _kernel_grid(kernel_k, vals)
    if center:
        grid, _, _ = _center_grid(grid, full)
    return _sigma_from_grid(W, grid)


def build_sigma_inter(traj_fits, kernel_k, kernel_l, k, l, quadrature, center=True):
    """Interaction Gram matrix for the ordered pair (k, l); K_kl = K_k * K_l.

    With ``center`` the product is taken over the two centered factors, so
    the interaction space carries no main-effect or constant component.
    """
    if k == l:
        raise IndexError("interaction requires two distinct coordinates, got k=l=%d" % k)
    p = len(traj_fits)
    u_times = np.asarray(traj_fits[k].times, dtype=float)
    tag = p + min(k, l) * p + max(k, l)
    nodes, raw, full = _node_context(u_times, quadrature, tag)
    W, _ = _centered_rows(raw)
    vk = evaluate_trajectory(traj_fits[k], nodes)
    vl = evaluate_trajectory(traj_fits[l], nodes)
    grid_k = _kernel_grid(kernel_k, vk)
    grid_l = _kernel_grid(kernel_l, vl)
    if center:
        grid_k, _, _ = _center_grid(grid_k, full)
        grid_l, _, _ = _center_grid(grid_l, full)
    return _sigma_from_grid(W, grid_k * grid_l)


@dataclass
class GramTensors:
    """All integral operators for one dataset's fitted trajectories.

    sigma_main[k] is Sigma^k; sigma_inter[slot] is Sigma^kl in canonical pair
    order (both orientations of a pair hold identical matrices). tbar_sigma
    stacks, per component, the vector of double integrals against Tbar used
    by the intercept update. Immutable after construction.
    """

    B: np.ndarray
    sigma_main: np.ndarray
    sigma_inter: np.ndarray
    quadrature: QuadratureSpec
    time_span: float
    u_times: np.ndarray
    u_mean: float
    tbar_sigma: np.ndarray = None
    centered: bool = True
    p: int = field(init=False)

    def __post_init__(self):
        self.p = self.sigma_main.shape[0]
        n = self.B.shape[0]
        if self.sigma_main.shape != (self.p, n, n):
            raise DimensionError("sigma_main must have shape (p, n, n)")
        if self.sigma_inter.shape != (self.p * (self.p - 1), n, n):
            raise DimensionError("sigma_inter must have shape (p*(p-1), n, n)")

    @property
    def n(self):
        return self.B.shape[0]

    def component(self, m):
        """Sigma matrix of canonical component m (mains first, then pairs)."""
        if m < self.p:
            return self.sigma_main[m]
        return self.sigma_inter[m - self.p]

    def stacked(self):
        """View of all component matrices as one (p**2, n, n) array."""
        return np.concatenate([self.sigma_main, self.sigma_inter], axis=0)


def build_gram_tensors(traj_fits, kernel_specs, quadrature=None, span=1.0,
                       center=False):
    """Build B and every Sigma^k / Sigma^kl for a set of fitted trajectories.

    Trajectory fits must share one (standardized) time grid. Unordered pairs
    are computed once and stored under both orientations. ``span`` records
    the raw time span the grid was standardized from. The default uses the
    raw kernel values; ``center`` switches to the zero-marginal-integral
    side condition per coordinate before products.
    """
    quadrature = QuadratureSpec() if quadrature is None else quadrature
    p = len(traj_fits)
    if len(kernel_specs) != p:
        raise DimensionError("need one kernel spec per coordinate")
    u_times = np.asarray(traj_fits[0].times, dtype=float)
    for fit in traj_fits[1:]:
        if fit.times.shape != u_times.shape or np.any(fit.times != u_times):
            raise DimensionError("trajectory fits must share one time grid")
    n = u_times.shape[0]
    B = build_B(u_times, float(u_times[-1]))
    pairs = canonical_pairs(p)

    shared = quadrature.scheme == "trapezoid_grid"
    if shared:
        nodes, raw, full = _node_context(u_times, quadrature, 0)
        W, tbar_w = _centered_rows(raw)
        grid_vals = [evaluate_trajectory(traj_fits[k], nodes) for k in range(p)]
        kernel_grids = [_kernel_grid(kernel_specs[k], grid_vals[k]) for k in range(p)]
        if center:
            kernel_grids = [_center_grid(g, full)[0] for g in kernel_grids]

    sigma_main = np.empty((p, n, n))
    sigma_inter = np.empty((p * (p - 1), n, n))
    tbar_sigma = np.empty((p * p, n))
    for k in range(p):
        if shared:
            grid = kernel_grids[k]
            Wk, tbar_k = W, tbar_w
        else:
            nodes_k, raw_k, full_k = _node_context(u_times, quadrature, k)
            Wk, tbar_k = _centered_rows(raw_k)
            grid = _kernel_grid(kernel_specs[k], evaluate_trajectory(traj_fits[k], nodes_k))
            if center:
                grid, _, _ = _center_grid(grid, full_k)
        sigma_main[k] = _sigma_from_grid(Wk, grid)
        tbar_sigma[k] = Wk @ (grid @ tbar_k)

    done = {}
    for slot, (k, l) in enumerate(pairs):
        key = (min(k, l), max(k, l))
        if key in done:
            sigma_inter[slot] = sigma_inter[done[key]]
            tbar_sigma[p + slot] = tbar_sigma[p + done[key]]
            continue
        if shared:
            grid = kernel_grids[k] * kernel_grids[l]
            Wp, tbar_p = W, tbar_w
        else:
            tag = p + key[0] * p + key[1]
            nodes_p, raw_p, full_p = _node_context(u_times, quadrature, tag)
            Wp, tbar_p = _centered_rows(raw_p)
            grid_k = _kernel_grid(kernel_specs[k], evaluate_trajectory(traj_fits[k], nodes_p))
            grid_l = _kernel_grid(kernel_specs[l], evaluate_trajectory(traj_fits[l], nodes_p))
            if center:
                grid_k, _, _ = _center_grid(grid_k, full_p)
                grid_l, _, _ = _center_grid(grid_l, full_p)
            grid = grid_k * grid_l
        sigma_inter[slot] = _sigma_from_grid(Wp, grid)
        tbar_sigma[p + slot] = Wp @ (grid @ tbar_p)
        done[key] = slot

    return GramTensors(
        B=B, sigma_main=sigma_main, sigma_inter=sigma_inter,
        quadrature=quadrature, time_span=float(span),
        u_times=u_times, u_mean=float(u_times.mean()), tbar_sigma=tbar_sigma,
        centered=bool(center),
    )


def assemble_sigma(theta, grams, allow_negative=False):
    """Sigma(theta) as an exact linear combination of the component matrices.

    ``allow_negative`` is reserved for unconstrained refits; the estimation
    path keeps theta nonnegative and a negative entry raises DomainError.
    """
    flat = theta.flat()
    if flat.shape[0] != grams.p ** 2:
        raise DimensionError("theta has %d components, grams expect %d"
                             % (flat.shape[0], grams.p ** 2))
    if not allow_negative and np.any(flat < 0):
        raise DomainError("theta must be nonnegative")
    n = grams.n
    out = np.zeros((n, n))
    for m in np.flatnonzero(flat):
        out += flat[m] * grams.component(m)
    return out
