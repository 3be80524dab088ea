"""Shared fixtures: small fitted systems reused across test modules.

Session scope keeps the expensive end-to-end fits to one each. Both use the
frozen benchmark estimation settings so downstream tests exercise the same
path the noise studies run.
"""

import numpy as np
import pytest

from sparseode.pipeline import benchmark_settings, fit_system
from sparseode.systems import (
    build_system,
    euler_solve,
    lv_protocol_times,
    nfblb_protocol_times,
    sample_observations,
)


def make_nfblb_dataset(seed, sigma):
    rng = np.random.default_rng(seed)
    system = build_system("nfblb", stimulus=rng.uniform(0.5, 1.5))
    trajectory = euler_solve(system, np.zeros(3), 2.0, 0.01)
    dataset = sample_observations(trajectory, nfblb_protocol_times(), sigma,
                                  rng_seed=seed)
    return system, trajectory, dataset


def make_lv_dataset(seed, sigma, pairs=5):
    rng = np.random.default_rng(seed)
    starts = rng.uniform(5.0, 15.0, pairs)
    x0 = np.repeat(starts, 2)
    system = build_system("lotka_volterra", pairs=pairs)
    trajectory = euler_solve(system, x0, 105.0, 0.01)
    dataset = sample_observations(trajectory, lv_protocol_times(), sigma,
                                  rng_seed=seed)
    return system, trajectory, dataset


@pytest.fixture(scope="session")
def nfblb_case():
    system, trajectory, dataset = make_nfblb_dataset(seed=1, sigma=0.01)
    fit = fit_system(dataset, seed=1, **benchmark_settings("nfblb"))
    return {"system": system, "trajectory": trajectory, "dataset": dataset,
            "fit": fit}


@pytest.fixture(scope="session")
def lv_case():
    system, trajectory, dataset = make_lv_dataset(seed=7, sigma=1.0)
    fit = fit_system(dataset, seed=7, **benchmark_settings("lotka_volterra"))
    return {"system": system, "trajectory": trajectory, "dataset": dataset,
            "fit": fit}
