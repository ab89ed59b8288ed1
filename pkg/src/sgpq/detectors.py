"""Online GP detectors over a sliding training window.

Four update rules share one streaming step: predict at the next time,
classify the observation, push either the observation or the predictive
mean into the window (evicting the oldest point), then run the warm
optimization budget on the new window.

* ``gpr-ad``     exact GP, 95% interval, always trains on the observation.
* ``gpr-adam``   exact GP, 95% interval, trains on the mean when anomalous.
* ``gpr-iadam``  exact GP, 95% interval, mean substituted only if beta <= beta_max.
* ``sgp-q``      sparse GP, likelihood threshold, Q-function drift test.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np

from . import kernels as kern
from .errors import InputError, StateError, StreamError
from .exact_gp import ExactGPModel
from .metrics import confusion_report
from .sparse_gp import SparseGPModel, init_inducing
from .training import OptimizerConfig, fit, initial_hyperparameters

Z95 = 1.96
SQRT_2PI = math.sqrt(2.0 * math.pi)
VARIANCE_FLOOR = 1e-12
DEFAULT_EPSILON_GRID = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.2)


class DetectorKind(str, Enum):
    GPR_AD = "gpr-ad"
    GPR_ADAM = "gpr-adam"
    GPR_IADAM = "gpr-iadam"
    SGP_Q = "sgp-q"


OBSERVED = "observed_value_added"
SUBSTITUTED = "prediction_mean_added"


# -- closed-form scores --------------------------------------------------------

def gaussian_likelihood(y: float, mean: float, variance: float) -> float:
    """Normal density of ``y`` under N(mean, variance)."""
    if not variance > 0:
        raise InputError(f"variance must be > 0, got {variance}")
    sd = math.sqrt(variance)
    return math.exp(-0.5 * (y - mean) ** 2 / variance) / (SQRT_2PI * sd)


def std_normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def beta_score(y: float, mean: float, std: float) -> float:
    """P(z < 1.96 - |mean - y| / std) for standard normal z."""
    if not std > 0:
        raise InputError(f"std must be > 0, got {std}")
    return std_normal_cdf(Z95 - abs(mean - y) / std)


def modified_q(x: float) -> float:
    """Two-exponential Q-function variant, maximal (2/3) at zero."""
    x2 = x * x
    return math.exp(-x2 / 4.0) / 6.0 + math.exp(-x2 / 3.0) / 2.0


# -- windows ---------------------------------------------------------------------

class SlidingWindow:
    """FIFO training set of at most ``capacity`` (t, y) points."""

    def __init__(self, capacity: int, t=(), y=()):
        if capacity < 1:
            raise InputError("window capacity must be >= 1")
        t, y = list(t), list(y)
        if len(t) != len(y):
            raise InputError("window times and values differ in length")
        if len(t) > capacity:
            raise InputError(f"{len(t)} initial points exceed capacity {capacity}")
        self.capacity = capacity
        self._t = deque(float(v) for v in t)
        self._y = deque(float(v) for v in y)
        self.generation = 0

    def __len__(self):
        return len(self._t)

    @property
    def full(self):
        return len(self._t) == self.capacity

    def push(self, t: float, y: float):
        """Append one point, evicting the earliest when at capacity."""
        self._t.append(float(t))
        self._y.append(float(y))
        if len(self._t) > self.capacity:
            self._t.popleft()
            self._y.popleft()
        self.generation += 1

    def arrays(self):
        return np.fromiter(self._t, float, len(self._t)), np.fromiter(self._y, float, len(self._y))

    def copy(self):
        new = SlidingWindow(self.capacity, self._t, self._y)
        new.generation = self.generation
        return new


class DriftStats:
    """Two FIFOs of recent absolute errors and likelihoods."""

    def __init__(self, W: int = 500, short_len: int = 10):
        if short_len < 1 or W < 1 or short_len > W:
            raise InputError(f"need 1 <= W' <= W, got W={W}, W'={short_len}")
        self.W = W
        self.short_len = short_len
        self.errors = deque(maxlen=W)
        self.likelihoods = deque(maxlen=W)

    def __len__(self):
        return len(self.errors)

    def update(self, e: float, p: float):
        if e < 0 or p < 0:
            raise InputError("errors and likelihoods must be non-negative")
        self.errors.append(float(e))
        self.likelihoods.append(float(p))
        return self

    @staticmethod
    def _long(buf):
        a = np.fromiter(buf, float, len(buf))
        return float(a.mean()), float(a.var(ddof=1)) if a.size > 1 else float("nan")

    def _short(self, buf):
        k = min(self.short_len, len(buf))
        a = np.fromiter(buf, float, len(buf))[-k:]
        return float(a.mean())

    def long_error(self):
        return self._long(self.errors)

    def long_likelihood(self):
        return self._long(self.likelihoods)

    def short_error(self):
        return self._short(self.errors)

    def short_likelihood(self):
        return self._short(self.likelihoods)

    def copy(self):
        new = DriftStats(self.W, self.short_len)
        new.errors.extend(self.errors)
        new.likelihoods.extend(self.likelihoods)
        return new


def update_drift_stats(stats: DriftStats, e: float, p: float) -> DriftStats:
    return stats.update(e, p)


def q_scores(stats: DriftStats):
    """(QE, QL): modified Q of (short mean - long mean) / long variance."""
    if len(stats) < 2:
        raise StateError("Q scores need at least two recorded steps")
    mu_e, var_e = stats.long_error()
    mu_p, var_p = stats.long_likelihood()
    qe = modified_q((stats.short_error() - mu_e) / max(var_e, VARIANCE_FLOOR))
    ql = modified_q((stats.short_likelihood() - mu_p) / max(var_p, VARIANCE_FLOOR))
    return qe, ql


# -- configuration and outcomes ---------------------------------------------------

@dataclass
class DetectorConfig:
    kind: DetectorKind = DetectorKind.SGP_Q
    q: int = 1000
    beta_max: float = 0.05
    epsilon_e: float = 0.3
    epsilon_l: float = 0.3
    epsilon_p: Optional[float] = None
    W: int = 500
    W_short: int = 10
    M: int = 100

    def __post_init__(self):
        self.kind = DetectorKind(self.kind)
        if self.q < 1 or self.M < 1:
            raise InputError("q and M must be >= 1")
        if self.M > self.q:
            raise InputError(f"M={self.M} exceeds window size q={self.q}")
        if not 1 <= self.W_short <= self.W:
            raise InputError(f"need 1 <= W_short <= W, got {self.W_short}, {self.W}")
        for name in ("beta_max", "epsilon_e", "epsilon_l"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise InputError(f"{name} must lie in [0, 1], got {v}")
        if self.epsilon_p is not None and self.epsilon_p < 0:
            raise InputError("epsilon_p must be >= 0")


@dataclass(frozen=True)
class DetectionOutcome:
    step_index: int
    t: float
    y: float
    predicted_mean: float
    predicted_variance: float
    is_anomaly: bool
    score: float
    window_action: str
    qe: Optional[float] = None
    ql: Optional[float] = None

    def __post_init__(self):
        if self.window_action == SUBSTITUTED and not self.is_anomaly:
            raise ValueError("mean substitution is only allowed for anomalous points")

    def to_record(self):
        return asdict(self)


# -- the detector -------------------------------------------------------------------

@dataclass
class Detector:
    config: DetectorConfig
    optimizer: OptimizerConfig
    model: object
    window: SlidingWindow
    stats: DriftStats = None
    steps: int = 0
    fit_warnings: int = 0

    def copy(self):
        return replace(self, model=self.model.copy(), window=self.window.copy(),
                       stats=self.stats.copy() if self.stats is not None else None)

    def predict_next(self, t: float):
        X, y = self.window.arrays()
        mean, var = self.model.predict_arrays(X, y, np.array([t]), self.window.generation)
        return float(mean[0]), float(var[0])

    def classify(self, y: float, mean: float, var: float):
        """Decide (is_anomaly, substitute_mean, score, qe, ql).

        Updates the drift statistics for SGP-Q as a side effect.
        """
        cfg = self.config
        sd = math.sqrt(var)
        kind = cfg.kind
        qe = ql = None
        if kind is DetectorKind.SGP_Q:
            if cfg.epsilon_p is None:
                raise StateError("sgp-q needs epsilon_p; run select_threshold first")
            p = gaussian_likelihood(y, mean, var)
            self.stats.update(abs(y - mean), p)
            anomalous = p < cfg.epsilon_p
            substitute = False
            if anomalous:
                if len(self.stats) < 2:
                    substitute = True
                else:
                    qe, ql = q_scores(self.stats)
                    substitute = qe <= cfg.epsilon_e or ql <= cfg.epsilon_l
            return anomalous, substitute, p, qe, ql

        lo, hi = mean - Z95 * sd, mean + Z95 * sd
        anomalous = not (lo <= y <= hi)
        if kind is DetectorKind.GPR_AD:
            return anomalous, False, abs(y - mean) / sd - Z95, None, None
        if kind is DetectorKind.GPR_ADAM:
            return anomalous, anomalous, abs(y - mean) / sd - Z95, None, None
        beta = beta_score(y, mean, sd)
        return anomalous, anomalous and beta <= cfg.beta_max, beta, None, None

    def step(self, t: float, y: float) -> DetectionOutcome:
        """Process one observation.  On any error the detector is unchanged."""
        stats_backup = self.stats.copy() if self.stats is not None else None
        try:
            mean, var = self.predict_next(t)
            anomalous, substitute, score, qe, ql = self.classify(y, mean, var)
            window = self.window.copy()
            window.push(t, mean if substitute else y)
            model = self.model.copy()
            X, Y = window.arrays()
            res = fit(model, X, Y, self.optimizer, "warm")
        except Exception:
            self.stats = stats_backup
            raise
        self.window, self.model = window, model
        self.fit_warnings += int(res.warning)
        outcome = DetectionOutcome(
            step_index=self.steps, t=float(t), y=float(y),
            predicted_mean=mean, predicted_variance=var,
            is_anomaly=bool(anomalous), score=float(score),
            window_action=SUBSTITUTED if substitute else OBSERVED,
            qe=qe, ql=ql)
        self.steps += 1
        return outcome


def step(detector: Detector, t: float, y: float):
    """Functional form: ``(outcome, detector)``; the detector is updated in place."""
    return detector.step(t, y), detector


def build_model(kind: DetectorKind, kernel, noise, X, M):
    if DetectorKind(kind) is DetectorKind.SGP_Q:
        return SparseGPModel(kernel, noise, init_inducing(X, M))
    return ExactGPModel(kernel, noise)


def make_detector(config: DetectorConfig, kernel_template: kern.Kernel,
                  optimizer: OptimizerConfig, train_t, train_y,
                  init_from_data: bool = True) -> Detector:
    """Fill the window with the training segment and run the initial budget."""
    train_t = np.asarray(train_t, dtype=float)
    train_y = np.asarray(train_y, dtype=float)
    if train_t.size > config.q:
        raise InputError(f"initial segment of {train_t.size} points exceeds q={config.q}")
    if train_t.size < 2:
        raise InputError("initial segment needs at least two points")
    if init_from_data:
        kernel, noise = initial_hyperparameters(kernel_template, train_t, train_y,
                                                optimizer.init_perturbation, optimizer.seed)
    else:
        kernel, noise = kernel_template, 0.1 * max(float(np.var(train_y, ddof=1)), 1e-6)
    model = build_model(config.kind, kernel, noise, train_t, config.M)
    fit(model, train_t, train_y, optimizer, "initial")
    window = SlidingWindow(config.q, train_t, train_y)
    stats = DriftStats(config.W, config.W_short) if config.kind is DetectorKind.SGP_Q else None
    return Detector(config, optimizer, model, window, stats)


def _series_arrays(series):
    if hasattr(series, "t") and hasattr(series, "y"):
        return np.asarray(series.t, dtype=float), np.asarray(series.y, dtype=float)
    t, y = series
    return np.asarray(t, dtype=float), np.asarray(y, dtype=float)


def stream(detector: Detector, test) -> List[DetectionOutcome]:
    t, y = _series_arrays(test)
    outcomes = []
    for ti, yi in zip(t, y):
        try:
            outcomes.append(detector.step(ti, yi))
        except Exception as exc:
            raise StreamError(f"step {len(outcomes)} failed: {exc}", outcomes, exc) from exc
    return outcomes


def run_stream(config: DetectorConfig, train, test, kernel_template=None,
               optimizer: OptimizerConfig = None, init_from_data: bool = True):
    """Train on ``train`` with the initial budget, then detect every test point."""
    kernel_template = kernel_template if kernel_template is not None else default_kernel()
    optimizer = optimizer or OptimizerConfig()
    tt, ty = _series_arrays(train)
    det = make_detector(config, kernel_template, optimizer, tt, ty, init_from_data)
    return stream(det, test)


def default_kernel():
    return kern.RBF() + kern.Linear()


@dataclass
class DetectorTemplate:
    """Everything needed to start an SGP-Q run except epsilon_p."""

    config: DetectorConfig
    kernel: kern.Kernel
    optimizer: OptimizerConfig
    train: object
    init_from_data: bool = True
    _trained: Detector = field(default=None, repr=False)

    def trained(self) -> Detector:
        if self._trained is None:
            t, y = _series_arrays(self.train)
            cfg = replace(self.config, epsilon_p=0.0)
            self._trained = make_detector(cfg, self.kernel, self.optimizer, t, y,
                                          self.init_from_data)
        return self._trained


def select_threshold(validation, grid: Sequence[float], template: DetectorTemplate) -> float:
    """Grid value with the best validation F1; ties go to the smallest value."""
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise InputError("threshold grid is empty")
    labels = getattr(validation, "labels", None)
    if labels is None:
        raise InputError("validation series has no labels")
    labels = np.asarray(labels).astype(int)
    if labels.min() == labels.max():
        raise InputError("validation labels need both classes")
    if len(grid) == 1:
        return grid[0]
    base = template.trained()
    best_eps, best_f1 = grid[0], -1.0
    for eps in grid:
        det = base.copy()
        det.config = replace(det.config, epsilon_p=eps)
        flags = [o.is_anomaly for o in stream(det, validation)]
        f1 = confusion_report(flags, labels).f1
        if f1 > best_f1:
            best_eps, best_f1 = eps, f1
    return best_eps
