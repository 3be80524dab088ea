"""Sparse nonparametric estimation of ODE systems from noisy time courses.

Fits each equation's right-hand side as a sum of main-effect and pairwise
interaction components in a tensor-product kernel space, selects the sparse
component set, recovers the induced regulatory network, and builds
post-selection confidence bands for the fitted trajectory integrals.
"""

from .errors import (ConditioningError, ConfigurationError, DataFormatError,
                     DegenerateSmootherError, DimensionError, DivergenceError,
                     DomainError, NumericalError, TimeRangeError,
                     UndefinedMetricError)
from .fileio import (read_dataset_csv, read_model_json, write_bands_csv,
                     write_dataset_csv, write_model_json)
from .gram import (GramTensors, QuadratureSpec, assemble_sigma,
                   build_gram_tensors, build_sigma_inter, build_sigma_main,
                   standardize_times)
from .inference import (ConfidenceBand, ModelFamily, all_subsets_family,
                        build_family, c0_compute, confidence_band, ls_refit,
                        sigma_hat)
from .kernels import (KernelSpec, ThetaVector, canonical_pairs, kernel_matrix,
                      kernel_values, pair_slot)
from .network import (NetworkEstimate, extract_regulators, fdp_power,
                      frequency_threshold_network, prediction_error, roc_auc)
from .pipeline import SystemFit, evaluate_rhs, fit_system, predict_states
from .solver import (EquationFit, SolverConfig, collinearity_indices,
                     component_norm, cv_kappa, fit_equation,
                     fit_equation_multi, gcv_eta, lasso_theta_step,
                     smoothing_matrix, solve_f_step, update_theta0)
from .systems import (Dataset, Trajectory, build_system, euler_solve, lv_truth,
                      nfblb_truth, sample_observations)
from .trajectory import (TrajectoryFit, evaluate_trajectory, fit_trajectory,
                         select_bandwidth, select_bandwidths)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
