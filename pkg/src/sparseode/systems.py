"""Benchmark ODE systems, fixed-step integration, and noisy sampling.

Two reference systems are built in:

``nfblb``
    Three-node enzymatic negative-feedback loop with a buffering node. The
    stimulus strength enters as a constant input parameter; states start at
    zero and relax to a stimulus-dependent steady state.

``lotka_volterra``
    Independent predator-prey pairs stacked into one system of dimension
    2 * pairs, with per-pair rate constants on a fixed arithmetic ladder.

Integration is forward Euler with a fixed step, which is the reference
discretization for all derived quantities; sampling snaps observation times
to the nearest solver grid point and adds independent Gaussian noise per
replicate.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, DivergenceError, TimeRangeError

NFBLB_PARAMS = {
    "c1": 10.0, "c2": 10.0, "c3": 10.0, "c4": 1.0, "c5": 10.0, "c6": 10.0,
    "C1": 0.1, "C2": 0.1, "C3": 0.1, "C4": 0.1, "C5": 0.1, "C6": 0.1,
    "ctilde1": 1.0, "ctilde2": 0.2,
}


@dataclass
class OdeSystemSpec:
    """A first-order autonomous system dx/dt = rhs(x).

    Attributes
    ----------
    name : str
    p : int
        State dimension.
    rhs : callable
        Maps a state vector of length p to its derivative.
    params : dict
        Rate constants and inputs the rhs closure was built from.
    truth : ndarray (p, p) of bool
        ``truth[k, j]`` is True when coordinate k appears in equation j.
    """

    name: str
    p: int
    rhs: callable
    params: dict = field(default_factory=dict)
    truth: np.ndarray = None


@dataclass
class Trajectory:
    """Dense solver output: ``states[i]`` is the state at ``times[i]``."""

    times: np.ndarray
    states: np.ndarray

    def at(self, t):
        """State at time(s) t via nearest-grid lookup.

        Raises TimeRangeError when t falls outside the integrated span.
        """
        t = np.asarray(t, dtype=float)
        lo, hi = self.times[0], self.times[-1]
        if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
            raise TimeRangeError(
                "requested time outside integrated span [%g, %g]" % (lo, hi)
            )
        idx = np.clip(np.searchsorted(self.times, t), 0, len(self.times) - 1)
        idx_prev = np.clip(idx - 1, 0, len(self.times) - 1)
        take_prev = np.abs(self.times[idx_prev] - t) <= np.abs(self.times[idx] - t)
        idx = np.where(take_prev, idx_prev, idx)
        return self.states[idx]


@dataclass
class Dataset:
    """Noisy observations on a shared time grid.

    ``observations`` has shape (replicates, n, p); replicate r holds
    independent noise around the same underlying trajectory unless the data
    were ingested from separately generated experiments.
    """

    times: np.ndarray
    observations: np.ndarray
    noise_sd: np.ndarray = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.observations = np.asarray(self.observations, dtype=float)
        if self.observations.ndim == 2:
            self.observations = self.observations[None, :, :]
        if self.observations.ndim != 3:
            raise DimensionError("observations must have shape (replicates, n, p)")
        if self.observations.shape[1] != self.times.shape[0]:
            raise DimensionError(
                "observations rows (%d) disagree with time grid length (%d)"
                % (self.observations.shape[1], self.times.shape[0])
            )
        if self.times.ndim != 1 or self.times.shape[0] < 2:
            raise DimensionError("need at least two observation times")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("observation times must be strictly increasing")

    @property
    def replicates(self):
        return self.observations.shape[0]

    @property
    def n(self):
        return self.observations.shape[1]

    @property
    def p(self):
        return self.observations.shape[2]


def nfblb_truth():
    """Directed dependency structure of the three-node loop, truth[k, j]."""
    truth = np.zeros((3, 3), dtype=bool)
    truth[0, 0] = True
    truth[1, 1] = True
    truth[2, 1] = True
    truth[0, 2] = True
    truth[1, 2] = True
    truth[2, 2] = True
    return truth


def lv_truth(pairs):
    """Dependency structure of stacked predator-prey pairs, truth[k, j]."""
    p = 2 * pairs
    truth = np.zeros((p, p), dtype=bool)
    for j in range(pairs):
        a, b = 2 * j, 2 * j + 1
        truth[a, a] = truth[b, a] = True
        truth[a, b] = truth[b, b] = True
    return truth


def build_system(name, **params):
    """Construct a benchmark system by name.

    ``nfblb`` accepts ``stimulus`` (default 1.0) plus overrides of the rate
    constants in NFBLB_PARAMS. ``lotka_volterra`` accepts ``pairs``
    (default 5).
    """
    if name == "nfblb":
        stimulus = float(params.pop("stimulus", 1.0))
        rates = dict(NFBLB_PARAMS)
        unknown = set(params) - set(rates)
        if unknown:
            raise ConfigurationError("unknown nfblb parameters: %s" % sorted(unknown))
        rates.update({k: float(v) for k, v in params.items()})
        c1, c2, c3, c4, c5, c6 = (rates[k] for k in ("c1", "c2", "c3", "c4", "c5", "c6"))
        C1, C2, C3, C4, C5, C6 = (rates[k] for k in ("C1", "C2", "C3", "C4", "C5", "C6"))
        ct1, ct2 = rates["ctilde1"], rates["ctilde2"]

        def rhs(x):
            x1, x2, x3 = x
            d1 = c1 * stimulus * (1.0 - x1) / ((1.0 - x1) + C1) - ct1 * c2 * x1 / (x1 + C2)
            d2 = c3 * (1.0 - x2) * x3 / ((1.0 - x2) + C3) - ct2 * c4 * x2 / (x2 + C4)
            d3 = c5 * x1 * (1.0 - x3) / ((1.0 - x3) + C5) - c6 * x2 * x3 / (x3 + C6)
            return np.array([d1, d2, d3])

        all_params = dict(rates)
        all_params["stimulus"] = stimulus
        return OdeSystemSpec("nfblb", 3, rhs, all_params, nfblb_truth())

    if name == "lotka_volterra":
        pairs = int(params.pop("pairs", 5))
        if params:
            raise ConfigurationError("unknown lotka_volterra parameters: %s" % sorted(params))
        if pairs < 1:
            raise ConfigurationError("pairs must be >= 1")
        j = np.arange(pairs, dtype=float)
        a1 = 1.1 + 0.2 * j
        a2 = 0.4 + 0.2 * j
        a3 = 0.1 + 0.2 * j
        a4 = 0.4 + 0.2 * j

        def rhs(x):
            prey = x[0::2]
            pred = x[1::2]
            out = np.empty_like(x)
            out[0::2] = a1 * prey - a2 * prey * pred
            out[1::2] = a3 * prey * pred - a4 * pred
            return out

        return OdeSystemSpec(
            "lotka_volterra", 2 * pairs, rhs,
            {"pairs": pairs, "alpha1": a1, "alpha2": a2, "alpha3": a3, "alpha4": a4},
            lv_truth(pairs),
        )

    raise ConfigurationError("unknown system %r" % (name,))


def euler_solve(system, x0, horizon, step=0.01):
    """Integrate dx/dt = rhs(x) by forward Euler with a fixed step.

    The grid is 0, step, 2*step, ...; a final shorter step lands exactly on
    ``horizon`` when it is not a step multiple. Raises DivergenceError with
    the offending time if the state leaves the finite range.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (system.p,):
        raise DimensionError("x0 must have length p=%d" % system.p)
    if not (horizon > 0 and step > 0):
        raise ConfigurationError("horizon and step must be positive")
    n_full = int(np.floor(horizon / step + 1e-12))
    times = np.arange(n_full + 1, dtype=float) * step
    if times[-1] < horizon - 1e-12:
        times = np.append(times, horizon)
    states = np.empty((len(times), system.p))
    states[0] = x0
    x = x0.copy()
    for i in range(1, len(times)):
        h = times[i] - times[i - 1]
        x = x + h * system.rhs(x)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(
                "state became non-finite at t=%g" % times[i], time=float(times[i])
            )
        states[i] = x
    return Trajectory(times, states)


def sample_observations(trajectory, times, noise_sd, rng_seed, replicates=1):
    """Draw noisy observations of a trajectory on a time grid.

    Observation times snap to the nearest solver grid point. ``noise_sd``
    is a scalar or per-variable vector of standard deviations; replicate r
    uses an independent stream derived from (rng_seed, r), so extending the
    replicate count preserves earlier replicates.
    """
    times = np.asarray(times, dtype=float)
    p = trajectory.states.shape[1]
    sd = np.asarray(noise_sd, dtype=float) * np.ones(p)
    if np.any(sd < 0):
        raise ConfigurationError("noise_sd must be nonnegative")
    if replicates < 1:
        raise ConfigurationError("replicates must be >= 1")
    clean = trajectory.at(times)
    obs = np.empty((replicates, len(times), p))
    for r in range(replicates):
        rng = np.random.default_rng([int(rng_seed), r])
        obs[r] = clean + rng.standard_normal((len(times), p)) * sd
    return Dataset(times, obs, noise_sd=sd)


def nfblb_protocol_times(n=40):
    """Standard sampling grid t_i = (i - 1) / 20 for the enzymatic benchmark."""
    return (np.arange(n, dtype=float)) / 20.0


def lv_protocol_times(n=200, span=100.0):
    """Evenly spaced sampling grid over [0, span] for the predator-prey benchmark."""
    return np.linspace(0.0, span, n)
