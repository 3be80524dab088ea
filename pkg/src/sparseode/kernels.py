"""Kernel families and component weights for the additive function space.

Each state coordinate k carries a univariate kernel K_k; pairwise interaction
components use the product kernel K_kl(u, v) = K_k(u_k, v_k) * K_l(u_l, v_l).
A weight vector theta combines components into

    K_theta = sum_k theta_k K_k + sum_{k != l} theta_kl K_kl,

with the canonical component order: main effects 1..p, then ordered pairs
(1,2), (1,3), ..., (1,p), (2,1), (2,3), ..., (p,p-1).  Both orientations of a
pair are distinct components with identical kernels, so equal weights on (k,l)
and (l,k) contribute the pair kernel twice.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError

FAMILIES = ("matern1", "matern2", "gaussian", "linear")

_SQRT3 = np.sqrt(3.0)
_SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class KernelSpec:
    """Univariate kernel for one state coordinate.

    Parameters
    ----------
    family : str
        One of ``matern1``, ``matern2``, ``gaussian``, ``linear``.
    nu : float
        Bandwidth. Ignored by the linear family.
    rescale : tuple or None
        Optional ``(lo, hi)`` affine map applied to inputs, sending
        ``[lo, hi]`` to ``[0, 1]`` before the kernel formula. The linear
        family requires a rescale map since its formula lives on [0, 1].
    """

    family: str
    nu: float = 1.0
    rescale: tuple = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(
                "unknown kernel family %r; expected one of %s" % (self.family, (FAMILIES,))
            )
        if self.family != "linear" and not self.nu > 0:
            raise ConfigurationError("bandwidth nu must be positive, got %r" % (self.nu,))
        if self.rescale is not None:
            lo, hi = self.rescale
            if not np.isfinite(lo) or not np.isfinite(hi) or not hi > lo:
                raise ConfigurationError("rescale interval must satisfy hi > lo")
        if self.family == "linear" and self.rescale is None:
            raise ConfigurationError("linear kernel requires a rescale interval")


def _map_inputs(spec, u):
    u = np.asarray(u, dtype=float)
    if spec.rescale is None:
        return u
    lo, hi = spec.rescale
    return (u - lo) / (hi - lo)


def kernel_values(spec, u, v):
    """Evaluate K(u, v) elementwise with numpy broadcasting."""
    u = _map_inputs(spec, u)
    v = _map_inputs(spec, v)
    if spec.family == "linear":
        return (u - 0.5) * (v - 0.5)
    d = np.abs(u - v)
    if spec.family == "matern1":
        r = _SQRT3 * d / spec.nu
        return (1.0 + r) * np.exp(-r)
    if spec.family == "matern2":
        r = _SQRT5 * d / spec.nu
        return (1.0 + r + r * r / 3.0) * np.exp(-r)
    # gaussian
    return np.exp(-(d * d) / (2.0 * spec.nu ** 2))


def kernel_matrix(spec, u, v):
    """Cross kernel matrix K[i, j] = K(u[i], v[j])."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return kernel_values(spec, u[:, None], v[None, :])


def eval(spec, u, v):  # noqa: A001 - scalar entry point, mirrors kernel_values
    """Scalar kernel value K(u, v)."""
    return float(kernel_values(spec, float(u), float(v)))


def interaction_eval(spec_k, spec_l, u_k, u_l, v_k, v_l):
    """Product kernel K_kl((u_k, u_l), (v_k, v_l)) = K_k(u_k, v_k) * K_l(u_l, v_l)."""
    return eval(spec_k, u_k, v_k) * eval(spec_l, u_l, v_l)


def weighted_eval(theta, specs, u_vec, v_vec):
    """Combined kernel K_theta(u, v) at a single pair of p-dimensional points."""
    u_vec = np.asarray(u_vec, dtype=float)
    v_vec = np.asarray(v_vec, dtype=float)
    if u_vec.ndim != 1 or v_vec.ndim != 1:
        raise DimensionError("weighted_eval expects 1-d points")
    return float(weighted_kernel_matrix(theta, specs, u_vec[None, :], v_vec[None, :])[0, 0])


def canonical_pairs(p):
    """Ordered interaction pairs [(0,1), (0,2), ..., (p-1,p-2)] (0-based)."""
    return [(k, l) for k in range(p) for l in range(p) if l != k]


def pair_slot(p, k, l):
    """Position of ordered pair (k, l) within the canonical pair list."""
    if not (0 <= k < p and 0 <= l < p):
        raise DimensionError("pair (%d, %d) out of range for p=%d" % (k, l, p))
    if k == l:
        raise IndexError("interaction pair requires two distinct coordinates, got k=l=%d" % k)
    return k * (p - 1) + (l if l < k else l - 1)


@dataclass
class ThetaVector:
    """Component weights: ``main`` has length p, ``inter`` length p*(p-1).

    Entries follow the canonical component order. Weights may be negative
    only in unconstrained refitting contexts; the estimation path keeps
    them nonnegative.
    """

    main: np.ndarray
    inter: np.ndarray

    def __post_init__(self):
        self.main = np.asarray(self.main, dtype=float)
        self.inter = np.asarray(self.inter, dtype=float)
        p = self.main.shape[0]
        if self.inter.shape != (p * (p - 1),):
            raise DimensionError(
                "inter must have length p*(p-1)=%d, got %s" % (p * (p - 1), self.inter.shape)
            )

    @property
    def p(self):
        return self.main.shape[0]

    @property
    def n_components(self):
        return self.main.shape[0] ** 2

    def flat(self):
        """Concatenated weights in canonical order (length p**2)."""
        return np.concatenate([self.main, self.inter])

    @classmethod
    def from_flat(cls, values, p):
        values = np.asarray(values, dtype=float)
        if values.shape != (p * p,):
            raise DimensionError("flat theta must have length p**2=%d" % (p * p,))
        return cls(values[:p].copy(), values[p:].copy())

    @classmethod
    def ones(cls, p):
        return cls(np.ones(p), np.ones(p * (p - 1)))

    @classmethod
    def zeros(cls, p):
        return cls(np.zeros(p), np.zeros(p * (p - 1)))

    def support(self, threshold=1e-8):
        """Indices (canonical order) of components with weight > threshold."""
        return np.flatnonzero(self.flat() > threshold)


def component_label(p, index):
    """Human-readable name of a canonical component index (1-based coordinates)."""
    if index < p:
        return "x%d" % (index + 1)
    k, l = canonical_pairs(p)[index - p]
    return "x%d:x%d" % (k + 1, l + 1)


def weighted_kernel_matrix(theta, specs, U, V):
    """Combined kernel K_theta between point sets.

    Parameters
    ----------
    theta : ThetaVector
    specs : sequence of KernelSpec, one per coordinate
    U : array (m, p)
    V : array (m2, p)

    Returns
    -------
    array (m, m2)
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    p = theta.p
    if len(specs) != p or U.shape[1] != p or V.shape[1] != p:
        raise DimensionError("theta, specs and point sets disagree on p")
    mains = [kernel_matrix(specs[k], U[:, k], V[:, k]) for k in range(p)]
    out = np.zeros((U.shape[0], V.shape[0]))
    for k in range(p):
        if theta.main[k] != 0.0:
            out += theta.main[k] * mains[k]
    for slot, (k, l) in enumerate(canonical_pairs(p)):
        w = theta.inter[slot]
        if w != 0.0:
            out += w * mains[k] * mains[l]
    return out
