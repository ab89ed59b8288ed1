"""Covariance functions, Gram matrices and hyperparameter packing.

Every kernel is an immutable dataclass holding strictly positive
hyperparameters.  Optimization happens in log space: :func:`pack` maps a
kernel plus the noise variance to a flat unconstrained vector, and
:func:`unpack` maps it back.  The flat layout is depth-first over the kernel
tree with the noise term last.

Kernels also know how to back-propagate an adjoint matrix ``G = dF/dK``
onto their log-hyperparameters and onto either input set.  The GP
objectives use this to get analytic gradients without any autodiff.

The mean function of every GP in this package is identically zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import InputError

MAX_DEPTH = 4


def as_inputs(X) -> np.ndarray:
    """Coerce a collection of inputs to an ``(n, d)`` float array.

    A 1-D array is read as ``n`` scalar inputs.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        return X.reshape(1, 1)
    if X.ndim == 1:
        return X[:, None]
    if X.ndim == 2:
        return X
    raise InputError(f"inputs must be at most 2-D, got shape {X.shape}")


def as_point(x) -> np.ndarray:
    """Coerce a single input (scalar or vector) to a ``(1, d)`` array."""
    x = np.asarray(x, dtype=float)
    if x.ndim > 1:
        raise InputError(f"a single input must be a scalar or vector, got shape {x.shape}")
    return x.reshape(1, -1)


def _check_positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise InputError(f"{name} must be finite and strictly positive, got {value!r}")


def _check_pair(X, X2):
    if X.shape[1] != X2.shape[1]:
        raise InputError(f"input dimension mismatch: {X.shape[1]} vs {X2.shape[1]}")


class Kernel:
    """Shared behaviour; concrete kernels are the dataclasses below."""

    input_dim: Union[int, None] = None

    def __add__(self, other):
        if not isinstance(other, Kernel):
            return NotImplemented
        left = self.children if isinstance(self, Sum) else (self,)
        right = other.children if isinstance(other, Sum) else (other,)
        return Sum(tuple(left) + tuple(right))

    def _check_dim(self, X):
        d = self.input_dim
        if d is not None and X.shape[1] != d:
            raise InputError(f"kernel expects {d}-dimensional inputs, got {X.shape[1]}")

    # Subclasses implement: n_params, log_params(), with_log_params(v),
    # _gram(X, X2), diag(X), backprop(X, X2, G), diag_backprop(X, g).

    def gram(self, X, X2=None) -> np.ndarray:
        X = as_inputs(X)
        self._check_dim(X)
        if X2 is None:
            K = self._gram(X, X)
            return 0.5 * (K + K.T)
        X2 = as_inputs(X2)
        _check_pair(X, X2)
        self._check_dim(X2)
        return self._gram(X, X2)


@dataclass(frozen=True)
class RBF(Kernel):
    variance: float = 1.0
    lengthscale: float = 1.0

    def __post_init__(self):
        _check_positive("RBF variance", self.variance)
        _check_positive("RBF lengthscale", self.lengthscale)

    @property
    def n_params(self):
        return 2

    def log_params(self):
        return np.log([self.variance, self.lengthscale])

    def with_log_params(self, v):
        return RBF(float(np.exp(v[0])), float(np.exp(v[1])))

    def _sqdist(self, X, X2):
        if X.shape[1] == 1:
            d = X[:, :1] - X2[:, 0]
            return d * d, d[:, :, None]
        diff = X[:, None, :] - X2[None, :, :]
        return np.sum(diff * diff, axis=-1), diff

    def _parts(self, X, X2):
        # Objectives ask for the Gram and then its backprop on the same
        # inputs; keep the most recent evaluation on the (immutable) instance.
        memo = self.__dict__.get("_memo")
        if memo is not None and np.array_equal(memo[0], X) and np.array_equal(memo[1], X2):
            return memo[2:]
        r2, diff = self._sqdist(X, X2)
        K = self.variance * np.exp(-0.5 * r2 / self.lengthscale**2)
        object.__setattr__(self, "_memo", (X.copy(), X2.copy(), K, r2, diff))
        return K, r2, diff

    def _gram(self, X, X2):
        return self._parts(X, X2)[0].copy()

    def diag(self, X):
        return np.full(as_inputs(X).shape[0], self.variance)

    def backprop(self, X, X2, G, inputs=True):
        K, r2, diff = self._parts(X, X2)
        l2 = self.lengthscale**2
        GK = G * K
        dparams = np.array([GK.sum(), np.sum(GK * r2) / l2])
        if not inputs:
            return dparams, None, None
        # dK/dx_i = -K (x_i - x2_j) / l^2
        W = GK[:, :, None] * diff / l2
        return dparams, -W.sum(axis=1), W.sum(axis=0)

    def diag_backprop(self, X, g):
        return np.array([np.sum(g) * self.variance, 0.0])


@dataclass(frozen=True)
class Linear(Kernel):
    variances: tuple = (1.0,)

    def __post_init__(self):
        v = tuple(float(x) for x in np.atleast_1d(self.variances))
        if not v:
            raise InputError("Linear kernel needs at least one variance")
        for x in v:
            _check_positive("Linear variance", x)
        object.__setattr__(self, "variances", v)

    @property
    def input_dim(self):
        return len(self.variances)

    @property
    def n_params(self):
        return len(self.variances)

    def log_params(self):
        return np.log(self.variances)

    def with_log_params(self, v):
        return Linear(tuple(float(x) for x in np.exp(v)))

    def _gram(self, X, X2):
        if X.shape[1] == 1:
            return np.multiply.outer(X[:, 0] * self.variances[0], X2[:, 0])
        return (X * np.asarray(self.variances)) @ X2.T

    def diag(self, X):
        X = as_inputs(X)
        return (X * X) @ np.asarray(self.variances)

    def backprop(self, X, X2, G, inputs=True):
        v = np.asarray(self.variances)
        GX2 = G @ X2
        dparams = v * np.sum(X * GX2, axis=0)
        if not inputs:
            return dparams, None, None
        return dparams, GX2 * v, (G.T @ X) * v

    def diag_backprop(self, X, g):
        X = as_inputs(X)
        return np.asarray(self.variances) * (g @ (X * X))


@dataclass(frozen=True)
class Periodic(Kernel):
    variance: float = 1.0
    lengthscales: tuple = (1.0,)
    period: float = 1.0

    def __post_init__(self):
        ls = tuple(float(x) for x in np.atleast_1d(self.lengthscales))
        if not ls:
            raise InputError("Periodic kernel needs at least one lengthscale")
        _check_positive("Periodic variance", self.variance)
        _check_positive("Periodic period", self.period)
        for x in ls:
            _check_positive("Periodic lengthscale", x)
        object.__setattr__(self, "lengthscales", ls)

    @property
    def input_dim(self):
        return len(self.lengthscales)

    @property
    def n_params(self):
        return 2 + len(self.lengthscales)

    def log_params(self):
        return np.log([self.variance, *self.lengthscales, self.period])

    def with_log_params(self, v):
        e = np.exp(v)
        return Periodic(float(e[0]), tuple(float(x) for x in e[1:-1]), float(e[-1]))

    def _parts(self, X, X2):
        u = np.pi * (X[:, None, :] - X2[None, :, :]) / self.period
        ls = np.asarray(self.lengthscales)
        s = np.sin(u)
        K = self.variance * np.exp(-0.5 * np.sum((s / ls) ** 2, axis=-1))
        return K, u, s, ls

    def _gram(self, X, X2):
        return self._parts(X, X2)[0]

    def diag(self, X):
        return np.full(as_inputs(X).shape[0], self.variance)

    def backprop(self, X, X2, G, inputs=True):
        K, u, s, ls = self._parts(X, X2)
        GK = G * K
        sc = s * np.cos(u) / ls**2
        d_ls = np.einsum("ij,ijd->d", GK, s**2) / ls**2
        d_period = np.einsum("ij,ijd->", GK, sc * u)
        dparams = np.concatenate([[GK.sum()], d_ls, [d_period]])
        if not inputs:
            return dparams, None, None
        W = GK[:, :, None] * sc * (np.pi / self.period)
        return dparams, -W.sum(axis=1), W.sum(axis=0)

    def diag_backprop(self, X, g):
        out = np.zeros(self.n_params)
        out[0] = np.sum(g) * self.variance
        return out


@dataclass(frozen=True)
class Sum(Kernel):
    children: tuple = ()

    def __post_init__(self):
        kids = tuple(self.children)
        if len(kids) < 2:
            raise InputError("Sum kernel needs at least two children")
        for k in kids:
            if not isinstance(k, Kernel):
                raise InputError(f"Sum child is not a kernel: {k!r}")
        object.__setattr__(self, "children", kids)
        if depth(self) > MAX_DEPTH:
            raise InputError(f"kernel nesting deeper than {MAX_DEPTH}")
        dims = {k.input_dim for k in kids} - {None}
        if len(dims) > 1:
            raise InputError(f"Sum children disagree on input dimension: {sorted(dims)}")

    @property
    def input_dim(self):
        dims = {k.input_dim for k in self.children} - {None}
        return dims.pop() if dims else None

    @property
    def n_params(self):
        return sum(k.n_params for k in self.children)

    def log_params(self):
        return np.concatenate([k.log_params() for k in self.children])

    def _split(self, v):
        out, i = [], 0
        for k in self.children:
            out.append(v[i:i + k.n_params])
            i += k.n_params
        return out

    def with_log_params(self, v):
        return Sum(tuple(k.with_log_params(p) for k, p in zip(self.children, self._split(v))))

    def _gram(self, X, X2):
        K = self.children[0]._gram(X, X2)
        for k in self.children[1:]:
            K = K + k._gram(X, X2)
        return K

    def gram(self, X, X2=None):
        # Children are symmetrised individually so the sum equals the
        # elementwise sum of child Grams exactly.
        X = as_inputs(X)
        self._check_dim(X)
        if X2 is not None:
            X2 = as_inputs(X2)
            _check_pair(X, X2)
            self._check_dim(X2)
        K = self.children[0].gram(X, X2)
        for k in self.children[1:]:
            K = K + k.gram(X, X2)
        return K

    def diag(self, X):
        return sum(k.diag(X) for k in self.children)

    def backprop(self, X, X2, G, inputs=True):
        dps, dX, dX2 = [], 0.0, 0.0
        for k in self.children:
            p, a, b = k.backprop(X, X2, G, inputs)
            dps.append(p)
            if not inputs:
                continue
            dX = dX + a
            dX2 = dX2 + b
        if not inputs:
            return np.concatenate(dps), None, None
        return np.concatenate(dps), dX, dX2

    def diag_backprop(self, X, g):
        return np.concatenate([k.diag_backprop(X, g) for k in self.children])


KernelSpec = Union[RBF, Linear, Periodic, Sum]


def depth(spec) -> int:
    if isinstance(spec, Sum):
        return 1 + max(depth(k) for k in spec.children)
    return 1


def eval_kernel(spec: Kernel, x, x2) -> float:
    """k(x, x2) for two single inputs, exactly symmetric in its arguments."""
    x, x2 = as_point(x), as_point(x2)
    _check_pair(x, x2)
    spec._check_dim(x)
    return float(0.5 * (spec._gram(x, x2)[0, 0] + spec._gram(x2, x)[0, 0]))


def gram_matrix(spec: Kernel, X, X2=None) -> np.ndarray:
    """Covariance matrix between two input sets (``X2=None`` means ``X``)."""
    return spec.gram(X, X2)


def pack(spec: Kernel, noise_variance: float) -> np.ndarray:
    _check_positive("noise variance", noise_variance)
    return np.concatenate([spec.log_params(), [math.log(noise_variance)]])


def _restore(v, template):
    """exp(v), except entries whose log matches the template keep it bit-exactly."""
    new = template.with_log_params(v)
    if np.array_equal(template.log_params(), v):
        return template
    return new


def unpack(v: Sequence[float], template: Kernel):
    """Inverse of :func:`pack` against a kernel with the same structure."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != template.n_params + 1:
        raise InputError(
            f"hyperparameter vector has length {v.size}, template needs {template.n_params + 1}")
    if not np.all(np.isfinite(v)):
        raise InputError("hyperparameter vector contains non-finite values")
    spec = _restore(v[:-1], template)
    return spec, float(np.exp(v[-1]))


# -- config (dict) round trip -------------------------------------------------

def kernel_from_dict(cfg) -> Kernel:
    """Build a kernel from a nested mapping.

    Accepted forms: ``{"rbf": {"variance": 1, "lengthscale": 2}}``,
    ``{"linear": {"variances": [1]}}``, ``{"periodic": {...}}``, and
    ``{"sum": [child, child, ...]}``.  Omitted hyperparameters take their
    dataclass defaults.
    """
    if not isinstance(cfg, dict) or len(cfg) != 1:
        raise InputError(f"kernel config must be a single-key mapping, got {cfg!r}")
    (name, body), = cfg.items()
    name = name.lower()
    body = body or {}
    try:
        if name == "rbf":
            return RBF(**body)
        if name == "linear":
            return Linear(**body)
        if name == "periodic":
            return Periodic(**body)
        if name == "sum":
            return Sum(tuple(kernel_from_dict(c) for c in body))
    except TypeError as exc:
        raise InputError(f"bad {name} kernel config: {exc}") from None
    raise InputError(f"unknown kernel type {name!r}")


def kernel_to_dict(spec: Kernel) -> dict:
    if isinstance(spec, RBF):
        return {"rbf": {"variance": spec.variance, "lengthscale": spec.lengthscale}}
    if isinstance(spec, Linear):
        return {"linear": {"variances": list(spec.variances)}}
    if isinstance(spec, Periodic):
        return {"periodic": {"variance": spec.variance,
                             "lengthscales": list(spec.lengthscales),
                             "period": spec.period}}
    return {"sum": [kernel_to_dict(k) for k in spec.children]}
