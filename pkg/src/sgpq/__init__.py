"""Streaming anomaly detection with exact and sparse Gaussian processes."""
from .detectors import (DetectionOutcome, DetectorConfig, DetectorKind, beta_score,
                        gaussian_likelihood, modified_q, q_scores, run_stream,
                        select_threshold)
from .errors import InputError, NumericalError, ParseError, StateError, StreamError
from .exact_gp import ExactGPModel, PredictiveDistribution, log_marginal_likelihood, predict
from .kernels import RBF, Linear, Periodic, Sum, eval_kernel, gram_matrix, pack, unpack
from .sparse_gp import SparseGPModel, elbo, init_inducing, sgp_predict
from .training import OptimizerConfig, fit, numerical_gradient, objective_gradient

__version__ = "0.1.0"
