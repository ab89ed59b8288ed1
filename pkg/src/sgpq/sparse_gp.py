"""Variational sparse GP regression with free inducing inputs.

The bound and its gradients are evaluated through M x M factors only:
with ``Kmm = Lm Lm^T`` and ``A = Lm^{-1} K_MN / sigma``,

    C = s2*I + K_NM Kmm^{-1} K_MN = s2 (I + A^T A)
    log|C| = N log s2 + log|I + A A^T|

so nothing of size N x N is ever formed and one evaluation costs O(N M^2).
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from . import kernels as kern
from .errors import InputError
from .exact_gp import LOG_2PI, PredictiveDistribution, check_training_set
from .linalg import robust_cholesky, tri_solve


def init_inducing(X, M: int, seed: int = 0) -> np.ndarray:
    """Evenly spaced inducing inputs over the range of ``X``.

    Placement is deterministic; ``seed`` is accepted for interface
    stability and does not change the result.  A zero-width range gets a
    ``1e-6 * (1..M)`` offset so ``Kmm`` stays factorizable.
    """
    X = kern.as_inputs(X)
    if M < 1:
        raise InputError(f"need at least one inducing input, got M={M}")
    if X.shape[0] < 1:
        raise InputError("cannot place inducing inputs on an empty window")
    lo, hi = X.min(axis=0), X.max(axis=0)
    cols = []
    for a, b in zip(lo, hi):
        if b > a:
            cols.append(np.linspace(a, b, M) if M > 1 else np.array([0.5 * (a + b)]))
        else:
            cols.append(a + 1e-6 * np.arange(1, M + 1))
    return np.column_stack(cols)


@dataclass
class _SparseTerms:
    key: tuple
    Lm: np.ndarray
    LB: np.ndarray
    A: np.ndarray        # Lm^{-1} K_MN / sigma
    c: np.ndarray        # LB^{-1} A y / sigma
    w: np.ndarray        # Kmm^{-1} mu_tilde, the predictive-mean weights
    Knm: np.ndarray
    knn_diag: np.ndarray


class SparseGPModel:
    """Kernel, noise variance and M inducing inputs ``Z``.

    The parameter vector is the kernel/noise log-parameters followed by
    ``Z`` flattened row-major; inducing inputs are unconstrained.
    """

    def __init__(self, kernel: kern.Kernel, noise_variance: float, inducing_inputs):
        kern._check_positive("noise variance", noise_variance)
        Z = kern.as_inputs(inducing_inputs).copy()
        if Z.shape[0] < 1:
            raise InputError("need at least one inducing input")
        self.kernel = kernel
        self.noise_variance = float(noise_variance)
        self.Z = Z
        self._cache = None

    def __repr__(self):
        return (f"SparseGPModel(kernel={self.kernel!r}, noise_variance={self.noise_variance!r}, "
                f"M={self.M})")

    @property
    def M(self) -> int:
        return self.Z.shape[0]

    def copy(self):
        new = copy.copy(self)
        new.Z = self.Z.copy()
        new._cache = None
        return new

    def get_params(self) -> np.ndarray:
        return np.concatenate([kern.pack(self.kernel, self.noise_variance), self.Z.ravel()])

    def set_params(self, v) -> None:
        v = np.asarray(v, dtype=float)
        nk = self.kernel.n_params + 1
        if v.shape != (nk + self.Z.size,):
            raise InputError(f"parameter vector has length {v.size}, expected {nk + self.Z.size}")
        self.kernel, self.noise_variance = kern.unpack(v[:nk], self.kernel)
        self.Z = v[nk:].reshape(self.Z.shape).copy()
        self._cache = None

    def _check(self, X):
        if X.shape[1] != self.Z.shape[1]:
            raise InputError(f"inputs are {X.shape[1]}-D but inducing inputs are {self.Z.shape[1]}-D")

    def _terms(self, X, y, generation=None) -> _SparseTerms:
        key = None
        if generation is not None:
            key = (generation, self.get_params().tobytes())
            if self._cache is not None and self._cache.key == key:
                return self._cache
        self._check(X)
        s2 = self.noise_variance
        sigma = np.sqrt(s2)
        Kmm = self.kernel.gram(self.Z)
        Lm, _ = robust_cholesky(Kmm)
        Knm = self.kernel.gram(X, self.Z)
        A = tri_solve(Lm, Knm.T) / sigma
        B = A @ A.T
        B[np.diag_indices_from(B)] += 1.0
        LB = sla.cholesky(B, lower=True, check_finite=False)
        c = tri_solve(LB, A @ y) / sigma
        w = tri_solve(Lm, tri_solve(LB, c, trans=True), trans=True)
        terms = _SparseTerms(key, Lm, LB, A, c, w, Knm, self.kernel.diag(X))
        if key is not None:
            self._cache = terms
        return terms

    def _bound(self, t: _SparseTerms, y) -> float:
        n = y.shape[0]
        s2 = self.noise_variance
        return float(
            -0.5 * n * LOG_2PI
            - np.sum(np.log(np.diag(t.LB)))
            - 0.5 * n * np.log(s2)
            - 0.5 * (y @ y) / s2
            + 0.5 * (t.c @ t.c)
            - 0.5 * np.sum(t.knn_diag) / s2
            + 0.5 * np.sum(t.A * t.A))

    def objective(self, X, y) -> float:
        X, y = check_training_set(X, y)
        return self._bound(self._terms(X, y), y)

    def value_and_grad(self, X, y):
        """ELBO and its gradient w.r.t. log-hyperparameters, log-noise and Z."""
        X, y = check_training_set(X, y)
        t = self._terms(X, y)
        value = self._bound(t, y)
        n = y.shape[0]
        s2 = self.noise_variance

        # P = K_NM Kmm^{-1}
        P = tri_solve(t.Lm, tri_solve(t.Lm, t.Knm.T), trans=True).T
        # C^{-1} v = (v - A^T B^{-1} A v) / s2
        Ay = t.A @ y
        alpha = (y - t.A.T @ sla.cho_solve((t.LB, True), Ay, check_finite=False)) / s2
        AP = t.A @ P
        CiP = (P - t.A.T @ sla.cho_solve((t.LB, True), AP, check_finite=False)) / s2
        Pa = P.T @ alpha

        G_nm = np.outer(alpha, Pa) - CiP + P / s2
        G_mm = -0.5 * np.outer(Pa, Pa) + 0.5 * (P.T @ CiP) - (0.5 / s2) * (P.T @ P)
        G_mm = 0.5 * (G_mm + G_mm.T)
        g_diag = np.full(n, -0.5 / s2)

        dk1, _, dZ1 = self.kernel.backprop(X, self.Z, G_nm)
        dk2, dZa, dZb = self.kernel.backprop(self.Z, self.Z, G_mm)
        dk3 = self.kernel.diag_backprop(X, g_diag)

        AAt = t.A @ t.A.T
        Binv = sla.cho_solve((t.LB, True), np.eye(self.M), check_finite=False)
        tr_Ci = (n - np.sum(Binv * AAt)) / s2
        tr_Q = s2 * np.trace(AAt)
        d_s2 = 0.5 * (alpha @ alpha - tr_Ci) + (np.sum(t.knn_diag) - tr_Q) / (2 * s2 * s2)

        grad = np.concatenate([dk1 + dk2 + dk3, [d_s2 * s2], (dZ1 + dZa + dZb).ravel()])
        return value, grad

    def predict_arrays(self, X, y, Xs, generation=None):
        X, y = check_training_set(X, y)
        Xs = kern.as_inputs(Xs)
        t = self._terms(X, y, generation)
        Ksm = self.kernel.gram(Xs, self.Z)
        mean = Ksm @ t.w
        V = tri_solve(t.Lm, Ksm.T)
        U = tri_solve(t.LB, V)
        var = self.kernel.diag(Xs) - np.sum(V * V, axis=0) + np.sum(U * U, axis=0)
        return mean, np.maximum(var, 0.0) + self.noise_variance


def elbo(model: SparseGPModel, X, y) -> float:
    """Collapsed variational lower bound on log p(y)."""
    return model.objective(X, y)


def sgp_predict(model: SparseGPModel, X, y, x_star, generation=None) -> PredictiveDistribution:
    mean, var = model.predict_arrays(X, y, kern.as_point(x_star), generation)
    return PredictiveDistribution(float(mean[0]), float(var[0]))
