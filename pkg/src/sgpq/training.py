"""Fixed-budget gradient ascent on the GP objectives.

Both model types expose ``get_params``/``set_params`` over an unconstrained
vector and ``value_and_grad(X, y)``; the optimizer here only sees that
surface, so exact and sparse models are trained by the same loop.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Union

import numpy as np

from . import kernels as kern
from .errors import InputError
from .exact_gp import check_training_set

log = logging.getLogger(__name__)

BETA1, BETA2, EPS = 0.9, 0.999, 1e-8


@dataclass
class OptimizerConfig:
    initial_iterations: int = 1000
    warm_iterations: int = 10
    step_size: float = 1e-2
    seed: int = 0
    # Std-dev of a seeded log-space perturbation of the data-driven initial
    # hyperparameters.  Zero keeps initialization fully data-driven.
    init_perturbation: float = 0.0

    def __post_init__(self):
        if self.initial_iterations < 0 or self.warm_iterations < 0:
            raise InputError("iteration counts must be >= 0")
        if not self.step_size > 0:
            raise InputError("step_size must be > 0")
        if self.init_perturbation < 0:
            raise InputError("init_perturbation must be >= 0")


@dataclass
class FitResult:
    model: object
    objective: float
    trace: List[float] = field(default_factory=list)
    warning: bool = False
    iterations: int = 0


def objective_gradient(model, X, y) -> np.ndarray:
    """Analytic gradient of the model's objective in its parameter space."""
    return model.value_and_grad(X, y)[1]


def numerical_gradient(model, X, y, h: float = 1e-5) -> np.ndarray:
    """Central finite differences with step ``h * max(1, |theta_i|)``.

    Independent of the analytic path; used as its test oracle.
    """
    theta = model.get_params()
    probe = model.copy()
    g = np.empty_like(theta)
    for i in range(theta.size):
        step = h * max(1.0, abs(theta[i]))
        up, dn = theta.copy(), theta.copy()
        up[i] += step
        dn[i] -= step
        probe.set_params(up)
        f_up = probe.objective(X, y)
        probe.set_params(dn)
        f_dn = probe.objective(X, y)
        g[i] = (f_up - f_dn) / (2.0 * step)
    return g


def _init_leaf(spec, var_y, span):
    ls = span / 10.0 if span > 0 else 1.0
    if isinstance(spec, kern.RBF):
        return kern.RBF(var_y, ls)
    if isinstance(spec, kern.Linear):
        return kern.Linear((var_y,) * spec.input_dim)
    if isinstance(spec, kern.Periodic):
        return kern.Periodic(var_y, (ls,) * spec.input_dim, span if span > 0 else 1.0)
    return kern.Sum(tuple(_init_leaf(k, var_y, span) for k in spec.children))


def initial_hyperparameters(template: kern.Kernel, X, y, perturbation=0.0, seed=0):
    """Scale-aware starting point: ``(kernel, noise_variance)``.

    Every kernel variance starts at the sample variance of ``y``, every
    lengthscale at a tenth of the input range, the noise at a tenth of the
    sample variance.
    """
    X, y = check_training_set(X, y)
    var_y = float(np.var(y, ddof=1)) if y.size > 1 else 0.0
    var_y = max(var_y, 1e-6)
    span = float(np.max(X.max(axis=0) - X.min(axis=0)))
    spec = _init_leaf(template, var_y, span)
    noise = 0.1 * var_y
    if perturbation > 0:
        v = kern.pack(spec, noise)
        v = v + perturbation * np.random.default_rng(seed).standard_normal(v.size)
        spec, noise = kern.unpack(v, spec)
    return spec, noise


def _budget(cfg, budget):
    if budget == "initial":
        return cfg.initial_iterations
    if budget == "warm":
        return cfg.warm_iterations
    if isinstance(budget, (int, np.integer)) and budget >= 0:
        return int(budget)
    raise InputError(f"budget must be 'initial', 'warm' or a count, got {budget!r}")


def fit(model, X, y, cfg: OptimizerConfig, budget: Union[str, int] = "initial") -> FitResult:
    """Maximize the model objective for exactly the budgeted iterations.

    Moment estimates start from zero on every call.  The best iterate seen
    (including the starting point) is written back into ``model``, so the
    objective never gets worse.  A non-finite value or gradient stops the
    run early with ``warning=True``.
    """
    X, y = check_training_set(X, y)
    n_iter = _budget(cfg, budget)
    theta = model.get_params()
    if n_iter == 0:
        return FitResult(model, model.objective(X, y), [], False, 0)

    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    best_theta, best_val = theta.copy(), -np.inf
    trace = []
    warned = False
    for it in range(1, n_iter + 1):
        model.set_params(theta)
        val, grad = model.value_and_grad(X, y)
        if not (np.isfinite(val) and np.all(np.isfinite(grad))):
            warned = True
            break
        trace.append(val)
        if val > best_val:
            best_theta, best_val = theta.copy(), val
        m = BETA1 * m + (1 - BETA1) * grad
        v = BETA2 * v + (1 - BETA2) * grad * grad
        mhat = m / (1 - BETA1**it)
        vhat = v / (1 - BETA2**it)
        theta = theta + cfg.step_size * mhat / (np.sqrt(vhat) + EPS)
    else:
        model.set_params(theta)
        try:
            val = model.objective(X, y)
        except (np.linalg.LinAlgError, ArithmeticError):
            val = -np.inf
        if np.isfinite(val) and val > best_val:
            best_theta, best_val = theta.copy(), val
        elif not np.isfinite(val):
            warned = True

    if warned:
        warnings.warn("non-finite objective or gradient; returning best finite iterate",
                      RuntimeWarning, stacklevel=2)
    if not np.isfinite(best_val):
        # Starting point itself was non-finite.
        model.set_params(best_theta)
        return FitResult(model, best_val, trace, True, len(trace))
    model.set_params(best_theta)
    return FitResult(model, best_val, trace, warned, len(trace))
