"""Regulatory-network extraction and recovery scoring.

An edge k -> j means coordinate k appears in equation j's fitted right-hand
side, through its main component or any interaction containing it. Scores
for ROC ranking default to the largest fitted component norm touching the
edge. Prediction error continues each fitted equation past the training
span through its integral form and compares against the true trajectory.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UndefinedMetricError
from .kernels import canonical_pairs
from .pipeline import predict_states
from .solver import component_norm

SUPPORT_THRESHOLD = 1e-8


@dataclass
class NetworkEstimate:
    """Per-equation regulator sets with optional scores and ground truth.

    ``regulators[j]`` is the set of 1-based coordinate indices driving
    equation j; ``edge_scores[k, j]`` ranks edge k+1 -> j+1; ``truth`` is a
    boolean adjacency in the same orientation.
    """

    regulators: list
    edge_scores: np.ndarray = None
    truth: np.ndarray = None

    @property
    def p(self):
        return len(self.regulators)

    def edge_set(self):
        return {(k, j + 1) for j, regs in enumerate(self.regulators) for k in regs}


def extract_regulators(equation_fits, grams=None, threshold=SUPPORT_THRESHOLD):
    """Regulator sets from fitted component weights.

    k joins equation j's set when the main weight theta_jk or any
    interaction weight involving k exceeds the threshold. With Gram tensors
    supplied, edge scores are the largest component norm touching the edge.
    """
    p = equation_fits[0].theta.p
    pairs = canonical_pairs(p)
    regulators = []
    scores = np.zeros((p, p)) if grams is not None else None
    for j, fit in enumerate(equation_fits):
        flat = fit.theta.flat()
        regs = set()
        for k in range(p):
            if flat[k] > threshold:
                regs.add(k + 1)
        for slot, (k, l) in enumerate(pairs):
            if flat[p + slot] > threshold:
                regs.add(k + 1)
                regs.add(l + 1)
        regulators.append(regs)
        if scores is not None:
            for m in range(p * p):
                if flat[m] <= threshold:
                    continue
                norm = component_norm(fit.theta, grams, fit.c, m)
                for k in ((m,) if m < p else pairs[m - p]):
                    scores[k, j] = max(scores[k, j], norm)
    return NetworkEstimate(regulators=regulators, edge_scores=scores)


def fdp_power(estimate, truth):
    """False discovery proportion and power of an edge selection."""
    truth = np.asarray(truth, dtype=bool)
    p = estimate.p
    if truth.shape != (p, p):
        raise ConfigurationError("truth adjacency must be p x p")
    true_edges = {(k + 1, j + 1) for k in range(p) for j in range(p) if truth[k, j]}
    selected = estimate.edge_set()
    if not true_edges:
        raise UndefinedMetricError("power is undefined for an empty truth set")
    false_hits = len(selected - true_edges)
    fdp = false_hits / max(len(selected), 1)
    power = len(selected & true_edges) / len(true_edges)
    return fdp, power


def roc_auc(edge_scores, truth):
    """Mann-Whitney AUC of edge scores against the true adjacency, ties at 1/2."""
    scores = np.asarray(edge_scores, dtype=float).ravel()
    labels = np.asarray(truth, dtype=bool).ravel()
    if scores.shape != labels.shape:
        raise ConfigurationError("scores and truth must have matching shapes")
    if not np.all(np.isfinite(scores)):
        raise ConfigurationError("edge scores must be finite")
    pos = scores[labels]
    neg = scores[~labels]
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetricError("AUC is undefined when truth is all edges or none")
    diff = pos[:, None] - neg[None, :]
    wins = np.sum(diff > 0) + 0.5 * np.sum(diff == 0)
    return float(wins / (pos.size * neg.size))


def prediction_error(system_fit, truth_trajectory, t_future=2.0, nodes=None):
    """Root of the summed squared prediction errors at a future time."""
    predicted = predict_states(system_fit, t_future, nodes=nodes)
    if not np.all(np.isfinite(predicted)):
        raise ArithmeticError("prediction quadrature produced non-finite values")
    actual = truth_trajectory.at(t_future)
    return float(np.sqrt(np.sum((predicted - actual) ** 2)))


def frequency_threshold_network(estimates, threshold=0.9):
    """Keep edges selected in at least a threshold fraction of replications."""
    if len(estimates) < 2:
        raise ConfigurationError("need at least two replication estimates")
    p = estimates[0].p
    counts = np.zeros((p, p))
    for est in estimates:
        if est.p != p:
            raise ConfigurationError("estimates disagree on the variable count")
        for (k, j) in est.edge_set():
            counts[k - 1, j - 1] += 1
    keep = counts / len(estimates) >= threshold
    regulators = [{k + 1 for k in range(p) if keep[k, j]} for j in range(p)]
    return NetworkEstimate(regulators=regulators,
                           edge_scores=counts / len(estimates))
