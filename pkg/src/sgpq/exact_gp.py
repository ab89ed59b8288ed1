"""Exact Gaussian process regression with a zero mean function."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from . import kernels as kern
from .errors import InputError
from .linalg import cho_inverse_lower, cho_solve, robust_cholesky, tri_solve

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PredictiveDistribution:
    """Gaussian predictive distribution of an observation ``y*``."""

    mean: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def interval(self, z: float = 1.96):
        s = z * self.std
        return self.mean - s, self.mean + s


def check_training_set(X, y):
    X = kern.as_inputs(X)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise InputError(f"|X|={X.shape[0]} but |y|={y.shape[0]}")
    if y.shape[0] < 1:
        raise InputError("training set is empty")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InputError("training set contains non-finite values")
    return X, y


@dataclass
class _ExactCache:
    key: tuple
    L: np.ndarray
    alpha: np.ndarray


class ExactGPModel:
    """Kernel plus Gaussian noise; caches the factor of ``K_NN + s2*I``.

    The cache is keyed by the caller-supplied training-set ``generation``
    together with the current parameter vector, so it is never reused
    across a window mutation or a parameter update.
    """

    def __init__(self, kernel: kern.Kernel, noise_variance: float = 1.0):
        kern._check_positive("noise variance", noise_variance)
        self.kernel = kernel
        self.noise_variance = float(noise_variance)
        self._cache = None

    def __repr__(self):
        return f"ExactGPModel(kernel={self.kernel!r}, noise_variance={self.noise_variance!r})"

    def copy(self):
        new = copy.copy(self)
        new._cache = None
        return new

    # -- parameter vector --------------------------------------------------
    def get_params(self) -> np.ndarray:
        return kern.pack(self.kernel, self.noise_variance)

    def set_params(self, v) -> None:
        self.kernel, self.noise_variance = kern.unpack(v, self.kernel)
        self._cache = None

    # -- factorization -----------------------------------------------------
    def _factor(self, X, y, generation=None):
        key = None
        if generation is not None:
            key = (generation, self.get_params().tobytes())
            if self._cache is not None and self._cache.key == key:
                return self._cache
        Ky = self.kernel.gram(X)
        Ky[np.diag_indices_from(Ky)] += self.noise_variance
        L, _ = robust_cholesky(Ky)
        cache = _ExactCache(key, L, cho_solve(L, y))
        if key is not None:
            self._cache = cache
        return cache

    def objective(self, X, y) -> float:
        X, y = check_training_set(X, y)
        c = self._factor(X, y)
        n = y.shape[0]
        return float(-0.5 * y @ c.alpha - np.sum(np.log(np.diag(c.L))) - 0.5 * n * LOG_2PI)

    def value_and_grad(self, X, y):
        """Log marginal likelihood and its gradient in log-parameter space."""
        X, y = check_training_set(X, y)
        c = self._factor(X, y)
        n = y.shape[0]
        value = -0.5 * y @ c.alpha - np.sum(np.log(np.diag(c.L))) - 0.5 * n * LOG_2PI
        # Only the lower triangle of the inverse is formed.  For symmetric dK,
        # sum(Kinv * dK) = sum((2 P - diag P) * dK) with P = tril(Kinv), so
        # the adjoint a'a' - Kinv never needs the full matrix.
        P = cho_inverse_lower(c.L)
        W = np.outer(c.alpha, c.alpha)
        W -= 2.0 * P
        W[np.diag_indices(n)] += np.diag(P)
        dk, _, _ = self.kernel.backprop(X, X, 0.5 * W, inputs=False)
        dnoise = 0.5 * (c.alpha @ c.alpha - np.trace(P)) * self.noise_variance
        return float(value), np.concatenate([dk, [dnoise]])

    def predict_arrays(self, X, y, Xs, generation=None):
        X, y = check_training_set(X, y)
        Xs = kern.as_inputs(Xs)
        c = self._factor(X, y, generation)
        Ks = self.kernel.gram(Xs, X)
        mean = Ks @ c.alpha
        V = tri_solve(c.L, Ks.T)
        var = self.kernel.diag(Xs) - np.sum(V * V, axis=0)
        # Quadratic form cannot exceed the prior variance in exact arithmetic.
        var = np.maximum(var, 0.0) + self.noise_variance
        return mean, var


def log_marginal_likelihood(model: ExactGPModel, X, y) -> float:
    """log N(y | 0, K_NN + s2*I)."""
    return model.objective(X, y)


def predict(model: ExactGPModel, X, y, x_star, generation=None) -> PredictiveDistribution:
    """Predictive distribution of the noisy observation at a single input."""
    mean, var = model.predict_arrays(X, y, kern.as_point(x_star), generation)
    return PredictiveDistribution(float(mean[0]), float(var[0]))
