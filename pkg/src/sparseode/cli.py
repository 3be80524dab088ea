"""Command-line interface: simulate, fit, infer, benchmark.

Exit codes: 0 success, 2 usage, 3 data/validation, 4 numerical failure.
Every command takes --seed and is fully deterministic given it. All
emitted files are whole-file writes; the benchmark rewrites its table
after each completed seed so partial sweeps survive interruption.
"""

import argparse
import sys

import numpy as np

from . import fileio
from .gram import DEFAULT_NODES, QuadratureSpec
from .inference import build_family, confidence_band
from .kernels import FAMILIES
from .network import extract_regulators, fdp_power, prediction_error
from .pipeline import benchmark_settings, fit_system, refit_support
from .solver import SolverConfig
from .systems import (build_system, euler_solve, lv_protocol_times, lv_truth,
                      nfblb_protocol_times, nfblb_truth, sample_observations)

SYSTEM_NAMES = ("nfblb", "lotka-volterra")
NFBLB_SIGMAS = "0.01:0.1:10"
LV_SIGMAS = "1:10:10"
LV_T_FUTURE = 100.5
NFBLB_T_FUTURE = 2.0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sparseode",
        description="Sparse nonparametric ODE estimation, inference, and "
                    "network recovery.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a benchmark dataset CSV")
    sim.add_argument("--system", required=True, choices=SYSTEM_NAMES)
    sim.add_argument("--n", type=int, default=None,
                     help="observation count (default: protocol value)")
    sim.add_argument("--sigma", type=float, default=0.0)
    sim.add_argument("--replicates", type=int, default=1)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)
    sim.add_argument("--stimulus", type=float, default=None,
                     help="fix the enzyme stimulus instead of drawing it")
    sim.add_argument("--pairs", type=int, default=5,
                     help="predator-prey pair count")
    sim.add_argument("--span", type=float, default=None,
                     help="observation horizon (default: protocol value)")
    sim.add_argument("--step", type=float, default=0.01)

    fit = sub.add_parser("fit", help="fit every equation of a dataset")
    fit.add_argument("--data", required=True)
    fit.add_argument("--out", required=True)
    fit.add_argument("--kernel", default="matern1", choices=FAMILIES)
    fit.add_argument("--nu", type=float, default=1.0,
                     help="component-kernel bandwidth")
    fit.add_argument("--h-kernel", default="matern1",
                     choices=("matern1", "matern2", "gaussian"),
                     help="trajectory-smoother kernel family")
    fit.add_argument("--quadrature", default="trapezoid",
                     choices=("trapezoid", "mc"))
    fit.add_argument("--nodes", type=int, default=DEFAULT_NODES)
    fit.add_argument("--draws", type=int, default=1000,
                     help="Monte-Carlo quadrature points")
    fit.add_argument("--max-iterations", type=int, default=10)
    fit.add_argument("--nonneg-f", action="store_true",
                     help="clamp fitted right-hand sides at zero in prediction")
    fit.add_argument("--seed", type=int, default=0)

    inf = sub.add_parser("infer", help="confidence bands from a model file")
    inf.add_argument("--model", required=True)
    inf.add_argument("--out-prefix", required=True)
    inf.add_argument("--alpha", type=float, default=0.05)
    inf.add_argument("--draws", type=int, default=10_000)
    inf.add_argument("--mode", default="per-time",
                     choices=("per-time", "max-over-time"))
    inf.add_argument("--naive", action="store_true",
                     help="fixed normal-quantile cutoff (ignores selection)")
    inf.add_argument("--seed", type=int, default=0)

    bench = sub.add_parser("benchmark", help="seeded replication sweep")
    bench.add_argument("--name", required=True, choices=SYSTEM_NAMES)
    bench.add_argument("--sigmas", default=None,
                       help="noise grid start:stop:count (default: protocol)")
    bench.add_argument("--reps", type=int, default=10)
    bench.add_argument("--out", required=True)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--t-future", type=float, default=None)
    bench.add_argument("--jobs", type=int, default=1,
                       help="accepted for compatibility; runs sequentially")
    return parser


def _parse_sigmas(text, parser):
    parts = text.split(":")
    if len(parts) != 3:
        parser.error("--sigmas must be start:stop:count")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        parser.error("--sigmas must be start:stop:count with numeric fields")
    if count < 1 or start <= 0 or stop < start:
        parser.error("--sigmas needs 0 < start <= stop and count >= 1")
    return np.linspace(start, stop, count)


def _simulate_dataset(system, n, sigma, seed, replicates=1, stimulus=None,
                      pairs=5, span=None, step=0.01, extra_horizon=0.0):
    """Shared dataset generation for the simulate and benchmark commands."""
    if system == "nfblb":
        times = nfblb_protocol_times(40 if n is None else n)
        if stimulus is None:
            stimulus = float(np.random.default_rng(int(seed)).uniform(0.5, 1.5))
        spec = build_system("nfblb", stimulus=stimulus)
        x0 = np.zeros(3)
        horizon = float(times[-1]) + extra_horizon
    else:
        span = 100.0 if span is None else span
        times = lv_protocol_times(200 if n is None else n, span)
        pair_starts = np.random.default_rng(int(seed)).uniform(5.0, 15.0, pairs)
        x0 = np.repeat(pair_starts, 2)
        spec = build_system("lotka_volterra", pairs=pairs)
        horizon = float(times[-1]) + extra_horizon
    trajectory = euler_solve(spec, x0, horizon, step=step)
    dataset = sample_observations(trajectory, times, sigma, seed,
                                  replicates=replicates)
    return dataset, trajectory


def cmd_simulate(args, parser):
    if args.sigma < 0:
        parser.error("--sigma must be nonnegative")
    dataset, _ = _simulate_dataset(
        args.system, args.n, args.sigma, args.seed, replicates=args.replicates,
        stimulus=args.stimulus, pairs=args.pairs, span=args.span, step=args.step)
    fileio.write_dataset_csv(args.out, dataset)
    print("wrote %s: n=%d p=%d replicates=%d sigma=%g seed=%d"
          % (args.out, dataset.n, dataset.p, dataset.replicates, args.sigma,
             args.seed))
    return 0


def _quadrature_from_args(args):
    scheme = "trapezoid_grid" if args.quadrature == "trapezoid" else "monte_carlo"
    return QuadratureSpec(scheme=scheme, nodes_per_axis=args.nodes,
                          draws=args.draws, seed=args.seed)


def cmd_fit(args, parser):
    dataset = fileio.read_dataset_csv(args.data)
    config = SolverConfig(max_iterations=args.max_iterations)
    system_fit = fit_system(
        dataset, f_family=args.kernel, f_nu=args.nu, h_family=args.h_kernel,
        quadrature=_quadrature_from_args(args), config=config, seed=args.seed,
        nonneg_f=args.nonneg_f)
    fileio.write_model_json(args.out, system_fit)
    sizes = ",".join(str(len(eq.support)) for eq in system_fit.equation_fits)
    print("wrote %s: p=%d support sizes [%s]" % (args.out, dataset.p, sizes))
    return 0


def cmd_infer(args, parser):
    if not 0 < args.alpha < 1:
        parser.error("--alpha must lie in (0, 1)")
    system_fit = fileio.read_model_json(args.model)
    times = system_fit.dataset.times
    tiled = np.tile(times, system_fit.dataset.replicates)
    for j, eq in enumerate(system_fit.equation_fits):
        if eq.support.size == 0:
            print("warning: equation %d has empty support; intercept-only band"
                  % (j + 1), file=sys.stderr)
        family = build_family(eq, system_fit.grams)
        band = confidence_band(
            eq, family, system_fit.grams, alpha=args.alpha, n_draws=args.draws,
            seed=args.seed + j, mode=args.mode,
            cutoff="naive" if args.naive else "selective")
        out = "%s_x%d.csv" % (args.out_prefix, j + 1)
        fileio.write_bands_csv(out, tiled, band)
        print("x%d: c0 in [%.4f, %.4f], sigma_hat=%.5g -> %s"
              % (j + 1, float(band.c0.min()), float(band.c0.max()),
                 band.sigma_hat, out))
    return 0


def cmd_benchmark(args, parser):
    name = args.name
    sigmas = _parse_sigmas(args.sigmas or
                           (NFBLB_SIGMAS if name == "nfblb" else LV_SIGMAS),
                           parser)
    if args.reps < 1:
        parser.error("--reps must be >= 1")
    t_future = args.t_future
    if t_future is None:
        t_future = NFBLB_T_FUTURE if name == "nfblb" else LV_T_FUTURE
    rows = []
    for si, sigma in enumerate(sigmas):
        for rep in range(args.reps):
            seed = int(np.random.SeedSequence(
                [int(args.seed), si, rep]).generate_state(1)[0] % 2**31)
            row = run_benchmark_case(name, float(sigma), seed, t_future)
            rows.append(row)
            fileio.write_sweep_csv(args.out, rows)
    print("wrote %s: %d rows over %d noise levels x %d reps"
          % (args.out, len(rows), len(sigmas), args.reps))
    return 0


def run_benchmark_case(name, sigma, seed, t_future):
    """One (sigma, seed) cell: simulate, fit, score selection and prediction.

    Prediction always goes through the support-restricted least-squares
    refit; the selection-stage weights are shrunken by design and would
    bias the forward integral.
    """
    if name == "nfblb":
        truth = nfblb_truth()
        extra = max(t_future - 1.95, 0.0) + 0.05
        dataset, trajectory = _simulate_dataset("nfblb", None, sigma, seed,
                                                extra_horizon=extra)
    else:
        truth = lv_truth(5)
        extra = max(t_future - 100.0, 0.0) + 1.0
        dataset, trajectory = _simulate_dataset("lotka-volterra", None, sigma,
                                                seed, extra_horizon=extra)
    system_fit = fit_system(dataset, seed=seed, **benchmark_settings(name))
    estimate = extract_regulators(system_fit.equation_fits)
    fdp, power = fdp_power(estimate, truth)
    err = prediction_error(refit_support(system_fit), trajectory, t_future)
    return {"sigma": sigma, "seed": seed, "prediction_error": err,
            "fdp": fdp, "power": power}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"simulate": cmd_simulate, "fit": cmd_fit,
                "infer": cmd_infer, "benchmark": cmd_benchmark}
    try:
        return handlers[args.command](args, parser)
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 3
    except ArithmeticError as exc:
        print("numerical error: %s" % exc, file=sys.stderr)
        return 4
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
