"""Dataset, model, and report serialization.

Datasets travel as CSV with full-precision decimal floats (repr round-trip,
LF line endings). A fitted system serializes to a single JSON document
holding everything needed to reconstruct it: raw observations, trajectory
coefficients, kernel and quadrature specs, and per-equation solver state.
Gram tensors are rebuilt deterministically on load rather than stored.
"""

import csv
import json

import numpy as np

from .errors import DataFormatError
from .gram import QuadratureSpec, build_gram_tensors, standardize_times
from .kernels import KernelSpec, ThetaVector, kernel_matrix
from .pipeline import SystemFit
from .solver import EquationFit, SolverConfig
from .systems import Dataset
from .trajectory import TrajectoryFit

FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# dataset CSV
# ---------------------------------------------------------------------------

def write_dataset_csv(path, dataset):
    """Emit header t,replicate,x1..xp and one row per (replicate, time)."""
    p = dataset.p
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "replicate"] + ["x%d" % (k + 1) for k in range(p)])
        for r in range(dataset.replicates):
            for i, t in enumerate(dataset.times):
                writer.writerow([repr(float(t)), r + 1]
                                + [repr(float(v)) for v in dataset.observations[r, i]])


def read_dataset_csv(path):
    """Parse a dataset CSV; malformed cells are reported by row and column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError("%s: empty file" % path)
    header = rows[0]
    if header[:2] != ["t", "replicate"] or len(header) < 3:
        raise DataFormatError("%s: header must start with t,replicate,x1,..." % path)
    p = len(header) - 2
    if header[2:] != ["x%d" % (k + 1) for k in range(p)]:
        raise DataFormatError("%s: variable columns must be x1..x%d" % (path, p))
    by_rep = {}
    order = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != p + 2:
            raise DataFormatError("%s: row %d has %d fields, expected %d"
                                  % (path, lineno, len(row), p + 2))
        def _parse(text, col):
            try:
                return float(text)
            except ValueError:
                raise DataFormatError("%s: row %d, column %s: bad number %r"
                                      % (path, lineno, col, text)) from None
        t = _parse(row[0], "t")
        try:
            rep = int(row[1])
        except ValueError:
            raise DataFormatError("%s: row %d, column replicate: bad integer %r"
                                  % (path, lineno, row[1])) from None
        values = [_parse(row[2 + k], header[2 + k]) for k in range(p)]
        if rep not in by_rep:
            by_rep[rep] = ([], [])
            order.append(rep)
        by_rep[rep][0].append(t)
        by_rep[rep][1].append(values)
    if not by_rep:
        raise DataFormatError("%s: no data rows" % path)
    base_times = by_rep[order[0]][0]
    obs = []
    for rep in order:
        times, values = by_rep[rep]
        if times != base_times:
            raise DataFormatError("%s: replicate %d has a different time grid"
                                  % (path, rep))
        obs.append(values)
    try:
        return Dataset(np.asarray(base_times), np.asarray(obs))
    except ValueError as exc:
        raise DataFormatError("%s: %s" % (path, exc)) from None


# ---------------------------------------------------------------------------
# model JSON
# ---------------------------------------------------------------------------

def _spec_doc(spec):
    return {"family": spec.family, "nu": spec.nu,
            "rescale": list(spec.rescale) if spec.rescale is not None else None}


def _spec_from_doc(doc):
    rescale = tuple(doc["rescale"]) if doc["rescale"] is not None else None
    return KernelSpec(doc["family"], doc["nu"], rescale=rescale)


def _array(values):
    return np.asarray(values, dtype=float)


def write_model_json(path, system_fit):
    quad = system_fit.quadrature
    config = system_fit.config
    doc = {
        "format_version": FORMAT_VERSION,
        "time_span": system_fit.time_span,
        "times": [float(t) for t in system_fit.dataset.times],
        "observations": system_fit.dataset.observations.tolist(),
        "nonneg_f": bool(system_fit.nonneg_f),
        "seed": int(system_fit.seed),
        "quadrature": {"scheme": quad.scheme, "nodes_per_axis": quad.nodes_per_axis,
                       "draws": quad.draws, "seed": quad.seed},
        "config": {
            "max_iterations": config.max_iterations,
            "block_tolerance": config.block_tolerance,
            "eta_grid": config.eta_grid.tolist(),
            "kappa_grid": config.kappa_grid.tolist(),
            "cv_folds": config.cv_folds,
            "theta_init": config.theta_init,
        },
        "f_kernels": [_spec_doc(s) for s in system_fit.f_specs],
        "trajectory": [
            [{"spec": _spec_doc(f.spec), "lam": f.lam, "coef": f.coef.tolist(),
              "gcv": f.gcv} for f in fits]
            for fits in system_fit.traj_fits
        ],
        "equations": [
            {
                "theta0": eq.theta0, "b": eq.b, "c": eq.c.tolist(),
                "theta": eq.theta.flat().tolist(), "eta": eq.eta,
                "kappa": eq.kappa, "support": eq.support.tolist(),
                "iterations": eq.iterations, "converged": eq.converged,
                "objective_trace": eq.objective_trace.tolist(),
                "y_mean": eq.y_mean,
                "collinearity_main": eq.collinearity_main.tolist(),
                "collinearity_inter": eq.collinearity_inter.tolist(),
                "collinearity_flag": bool(eq.collinearity_flag),
            }
            for eq in system_fit.equation_fits
        ],
    }
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def read_model_json(path):
    """Rebuild a SystemFit from its serialized form.

    Trajectory fits are restored from stored coefficients; Gram tensors are
    rebuilt from them, which reproduces the originals bit-for-bit given the
    same quadrature spec.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError("%s: not valid JSON (%s)" % (path, exc)) from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise DataFormatError("%s: unsupported format version %r"
                              % (path, doc.get("format_version")))
    try:
        dataset = Dataset(_array(doc["times"]), _array(doc["observations"]))
        span = float(doc["time_span"])
        u_times, _ = standardize_times(dataset.times, span)
        qd = doc["quadrature"]
        quadrature = QuadratureSpec(scheme=qd["scheme"],
                                    nodes_per_axis=qd["nodes_per_axis"],
                                    draws=qd["draws"], seed=qd["seed"])
        cd = doc["config"]
        config = SolverConfig(max_iterations=cd["max_iterations"],
                              block_tolerance=cd["block_tolerance"],
                              eta_grid=_array(cd["eta_grid"]),
                              kappa_grid=_array(cd["kappa_grid"]),
                              cv_folds=cd["cv_folds"],
                              theta_init=cd["theta_init"])
        f_specs = [_spec_from_doc(d) for d in doc["f_kernels"]]
        traj_fits = []
        for r, fits_doc in enumerate(doc["trajectory"]):
            fits = []
            for k, fdoc in enumerate(fits_doc):
                spec = _spec_from_doc(fdoc["spec"])
                coef = _array(fdoc["coef"])
                K = kernel_matrix(spec, u_times, u_times)
                fits.append(TrajectoryFit(
                    times=u_times, y=dataset.observations[r, :, k], spec=spec,
                    lam=float(fdoc["lam"]), coef=coef, fitted=K @ coef,
                    gcv=float(fdoc["gcv"])))
            traj_fits.append(fits)
        grams = [build_gram_tensors(fits, f_specs, quadrature, span=span)
                 for fits in traj_fits]
        p = dataset.p
        equation_fits = []
        for j, edoc in enumerate(doc["equations"]):
            y_cols = [dataset.observations[r][:, j] for r in range(dataset.replicates)]
            yc = np.concatenate([y - y.mean() for y in y_cols])
            equation_fits.append(EquationFit(
                theta0=float(edoc["theta0"]), b=float(edoc["b"]),
                c=_array(edoc["c"]),
                theta=ThetaVector.from_flat(_array(edoc["theta"]), p),
                eta=float(edoc["eta"]), kappa=float(edoc["kappa"]),
                support=np.asarray(edoc["support"], dtype=int),
                iterations=int(edoc["iterations"]),
                objective_trace=_array(edoc["objective_trace"]),
                converged=bool(edoc["converged"]), y_mean=float(edoc["y_mean"]),
                y_centered=yc,
                collinearity_main=_array(edoc["collinearity_main"]),
                collinearity_inter=_array(edoc["collinearity_inter"]),
                collinearity_flag=bool(edoc["collinearity_flag"]),
                replicates=dataset.replicates))
    except (KeyError, IndexError, TypeError) as exc:
        raise DataFormatError("%s: missing or malformed field (%s)" % (path, exc)) from None
    return SystemFit(
        dataset=dataset, time_span=span, u_times=u_times, traj_fits=traj_fits,
        f_specs=f_specs, grams=grams, equation_fits=equation_fits,
        quadrature=quadrature, config=config, nonneg_f=bool(doc["nonneg_f"]),
        seed=int(doc["seed"]),
    )


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def write_bands_csv(path, times, band):
    """Band table: t, center, lower, upper, c0, sigma_hat."""
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "center", "lower", "upper", "c0", "sigma_hat"])
        for i, t in enumerate(times):
            writer.writerow([repr(float(t)), repr(float(band.center[i])),
                             repr(float(band.lower[i])), repr(float(band.upper[i])),
                             repr(float(band.c0[i])), repr(float(band.sigma_hat))])


def write_metrics_report(path, metrics):
    """Flat key=value report, one entry per line."""
    with open(path, "w", newline="\n") as fh:
        for key, value in metrics.items():
            fh.write("%s=%s\n" % (key, value))


SWEEP_COLUMNS = ("sigma", "seed", "prediction_error", "fdp", "power")


def write_sweep_csv(path, rows):
    """Benchmark sweep table plus per-sigma aggregate-mean rows.

    Rewritten whole after every completed seed so partial results survive
    an interrupted sweep.
    """
    by_sigma = {}
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([repr(float(row["sigma"])), row["seed"],
                             repr(float(row["prediction_error"])),
                             repr(float(row["fdp"])), repr(float(row["power"]))])
            by_sigma.setdefault(row["sigma"], []).append(row)
        for sigma in sorted(by_sigma):
            group = by_sigma[sigma]
            writer.writerow([
                repr(float(sigma)), "mean",
                repr(float(np.mean([r["prediction_error"] for r in group]))),
                repr(float(np.mean([r["fdp"] for r in group]))),
                repr(float(np.mean([r["power"] for r in group]))),
            ])


def read_sweep_csv(path):
    """Parse a sweep table back into per-seed rows and per-sigma means."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != SWEEP_COLUMNS:
        raise DataFormatError("%s: not a sweep table" % path)
    seeds, means = [], []
    for row in rows[1:]:
        entry = {"sigma": float(row[0]), "seed": row[1],
                 "prediction_error": float(row[2]), "fdp": float(row[3]),
                 "power": float(row[4])}
        (means if row[1] == "mean" else seeds).append(entry)
    return seeds, means
