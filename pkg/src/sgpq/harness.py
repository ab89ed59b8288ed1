"""Experiment driver: config, repeats, scoring and result files.

A run reads one series (a CSV file or a synthetic spec), splits off the
initial training segment, selects the likelihood threshold on a noisy
validation copy when the detector is SGP-Q and no threshold is fixed,
streams the test points, and scores them pointwise.  Each repeat uses
``seed + r``; all outputs are deterministic given the config.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import yaml

from . import data_io
from . import kernels as kern
from .detectors import (DEFAULT_EPSILON_GRID, DetectionOutcome, DetectorConfig, DetectorKind,
                        DetectorTemplate, make_detector, select_threshold, stream)
from .errors import InputError, ParseError, StreamError
from .metrics import EvalReport, confusion_report
from .training import OptimizerConfig

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("step", "t", "y", "mean", "variance", "is_anomaly", "score",
                 "window_action", "qe", "ql", "label")


@dataclass
class ExperimentConfig:
    dataset: dict
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    kernel: dict = field(default_factory=lambda: {"sum": [{"rbf": {}}, {"linear": {}}]})
    split: data_io.SplitSpec = field(default_factory=data_io.SplitSpec)
    repeats: int = 5
    seed: int = 0
    output_dir: str = "results"
    epsilon_grid: Sequence[float] = DEFAULT_EPSILON_GRID
    init_from_data: bool = True
    base_dir: Optional[str] = field(default=None, repr=False)

    def __post_init__(self):
        if self.repeats < 1:
            raise InputError("repeats must be >= 1")
        if not self.epsilon_grid:
            raise InputError("epsilon_grid must be non-empty")
        if self.split.initial_train_len > self.detector.q:
            raise InputError(f"initial_train_len={self.split.initial_train_len} "
                             f"exceeds window size q={self.detector.q}")
        if not isinstance(self.dataset, dict) or ("path" in self.dataset) == ("synth" in self.dataset):
            raise InputError("dataset needs exactly one of 'path' or 'synth'")
        self.kernel_spec()

    def kernel_spec(self) -> kern.Kernel:
        return kern.kernel_from_dict(self.kernel)

    def to_dict(self):
        skip = ("base_dir", "output_dir")
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in skip}
        out["detector"] = asdict(self.detector)
        out["detector"]["kind"] = self.detector.kind.value
        out["optimizer"] = asdict(self.optimizer)
        out["split"] = asdict(self.split)
        out["epsilon_grid"] = [float(g) for g in self.epsilon_grid]
        return out


def _build(cls, raw, where):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise InputError(f"{where} must be a mapping, got {raw!r}")
    known = {f.name for f in fields(cls)}
    extra = set(raw) - known
    if extra:
        raise InputError(f"unknown {where} keys: {sorted(extra)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise InputError(f"bad {where}: {exc}") from None


def config_from_dict(raw: dict, base_dir=None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise InputError("config must be a mapping")
    known = {f.name for f in fields(ExperimentConfig)} - {"base_dir"}
    extra = set(raw) - known
    if extra:
        raise InputError(f"unknown config keys: {sorted(extra)}")
    if "dataset" not in raw:
        raise InputError("config needs a 'dataset'")
    raw = dict(raw)
    raw["detector"] = _build(DetectorConfig, raw.get("detector"), "detector")
    raw["optimizer"] = _build(OptimizerConfig, raw.get("optimizer"), "optimizer")
    split = dict(raw.get("split") or {})
    if split.get("validation") is not None:
        split["validation"] = _build(data_io.ValidationSpec, split["validation"], "split.validation")
    raw["split"] = _build(data_io.SplitSpec, split, "split")
    try:
        return ExperimentConfig(**raw, base_dir=None if base_dir is None else str(base_dir))
    except TypeError as exc:
        raise InputError(f"bad config: {exc}") from None


def load_config(path) -> ExperimentConfig:
    """Read a YAML (or JSON) experiment config."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return config_from_dict(raw, base_dir=path.parent)


# -- series ---------------------------------------------------------------------------

def synth_spec_from_dict(raw: dict) -> data_io.SynthSpec:
    raw = dict(raw)
    raw["anomaly"] = _build(data_io.AnomalySpec, raw.get("anomaly"), "synth.anomaly")
    return _build(data_io.SynthSpec, raw, "synth")


def load_dataset(cfg: ExperimentConfig, seed: int) -> data_io.TimeSeries:
    ds = cfg.dataset
    if "synth" in ds:
        return data_io.synth_stream(synth_spec_from_dict(ds["synth"]), seed=seed)
    base = Path(cfg.base_dir) if cfg.base_dir else Path(".")
    path = Path(ds["path"])
    path = path if path.is_absolute() else base / path
    series = data_io.load_series_csv(path, ds.get("value_column", "value"))
    if ds.get("labels"):
        lab = Path(ds["labels"])
        lab = lab if lab.is_absolute() else base / lab
        series = data_io.attach_labels(series, data_io.load_label_intervals(lab))
    return series


# -- scoring ----------------------------------------------------------------------------

def score(outcomes: Sequence[DetectionOutcome], labels) -> EvalReport:
    """Pointwise report of the outcomes' anomaly flags against ``labels``."""
    return confusion_report([o.is_anomaly for o in outcomes], labels)


@dataclass(frozen=True)
class Aggregate:
    n_runs: int
    mean_f1: float
    std_f1: float
    means: dict

    def to_dict(self):
        return asdict(self)


def aggregate_runs(reports: Sequence[EvalReport]) -> Aggregate:
    """Mean and sample std (n-1) of F1, plus the mean of every metric."""
    if not reports:
        raise InputError("no reports to aggregate")
    f1 = np.array([r.f1 for r in reports])
    std = float(np.std(f1, ddof=1)) if f1.size > 1 else 0.0
    means = {k: float(np.mean([getattr(r, k) for r in reports]))
             for k in ("precision", "recall", "f1", "true_positives",
                       "false_positives", "false_negatives")}
    return Aggregate(len(reports), float(f1.mean()), std, means)


# -- output files ---------------------------------------------------------------------

def _atomic_write(path: Path, text: str):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    return repr(float(v))


def trace_text(outcomes: Sequence[DetectionOutcome], labels=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for i, o in enumerate(outcomes):
        w.writerow([o.step_index, _fmt(o.t), _fmt(o.y), _fmt(o.predicted_mean),
                    _fmt(o.predicted_variance), int(o.is_anomaly), _fmt(o.score),
                    o.window_action, _fmt(o.qe), _fmt(o.ql),
                    "" if labels is None else int(labels[i])])
    return buf.getvalue()


def trace_name(kind, seed):
    return f"trace_{DetectorKind(kind).value}_seed{seed}.csv"


def summary_name(kind, seed):
    return f"summary_{DetectorKind(kind).value}_seed{seed}.json"


def summary_text(summary: dict) -> str:
    return json.dumps(summary, sort_keys=True, indent=2, allow_nan=False) + "\n"


def emit_outputs(outcomes, report: EvalReport, output_dir, kind, seed, labels=None):
    """Write one run's trace CSV and summary JSON; return both paths."""
    out = Path(output_dir)
    trace = _atomic_write(out / trace_name(kind, seed), trace_text(outcomes, labels))
    summary = {"detector": DetectorKind(kind).value, "seed": seed,
               "report": report.to_dict(), "trace": trace.name, "n_points": len(outcomes)}
    return trace, _atomic_write(out / summary_name(kind, seed), summary_text(summary))


def read_trace(path):
    """Parse a trace file back into (flags, labels or None)."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise InputError(f"cannot read trace {path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "is_anomaly" not in reader.fieldnames:
            raise ParseError(f"{path}: not a trace file (no is_anomaly column)")
        flags, labels = [], []
        for row, rec in enumerate(reader, start=1):
            try:
                flags.append(int(rec["is_anomaly"]))
                lab = rec.get("label", "")
                labels.append(None if lab in ("", None) else int(lab))
            except ValueError:
                raise ParseError(f"{path}: row {row}: bad flag or label") from None
    if any(v is None for v in labels):
        labels = None
    return np.array(flags, dtype=int), None if labels is None else np.array(labels, dtype=int)


# -- experiment ---------------------------------------------------------------------------

@dataclass
class RunRecord:
    repeat: int
    seed: int
    status: str
    report: Optional[EvalReport] = None
    epsilon_p: Optional[float] = None
    trace: Optional[str] = None
    error: Optional[str] = None
    fit_warnings: int = 0
    outcomes: List[DetectionOutcome] = field(default_factory=list, repr=False)

    def to_dict(self):
        d = {"repeat": self.repeat, "seed": self.seed, "status": self.status,
             "epsilon_p": self.epsilon_p, "trace": self.trace, "error": self.error,
             "fit_warnings": self.fit_warnings}
        d["report"] = self.report.to_dict() if self.report is not None else None
        return d


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: List[RunRecord]
    aggregate: Optional[Aggregate]
    summary_path: Optional[Path] = None

    @property
    def n_failed(self):
        return sum(r.status != "ok" for r in self.runs)

    def summary(self):
        return {"config": self.config.to_dict(),
                "detector": self.config.detector.kind.value,
                "runs": [r.to_dict() for r in self.runs],
                "n_failed": self.n_failed,
                "aggregate": self.aggregate.to_dict() if self.aggregate else None}


def _validation_series(cfg: ExperimentConfig, series, seed):
    v = cfg.split.validation or data_io.ValidationSpec()
    if v.start is not None and v.stop is not None:
        segment = (v.start, v.stop)
    else:
        segment = data_io.default_validation_segment(series, cfg.split.initial_train_len, v.length)
    return data_io.make_validation(series, segment, v.noise_scale, seed)


def run_once(cfg: ExperimentConfig, repeat: int, write=True) -> RunRecord:
    seed = cfg.seed + repeat
    rec = RunRecord(repeat, seed, "failed")
    try:
        series = load_dataset(cfg, seed)
        if series.labels is None:
            raise InputError("dataset has no labels to score against")
        train, test = data_io.initial_split(series, cfg.split)
        optimizer = replace(cfg.optimizer, seed=cfg.optimizer.seed + repeat)
        det_cfg = cfg.detector
        if det_cfg.kind is DetectorKind.SGP_Q and det_cfg.epsilon_p is None:
            template = DetectorTemplate(det_cfg, cfg.kernel_spec(), optimizer, train,
                                        cfg.init_from_data)
            eps = select_threshold(_validation_series(cfg, series, seed), cfg.epsilon_grid, template)
            det = template.trained().copy()
            det.config = replace(det.config, epsilon_p=eps)
        else:
            det = make_detector(det_cfg, cfg.kernel_spec(), optimizer, train.t, train.y,
                                cfg.init_from_data)
        rec.epsilon_p = det.config.epsilon_p
        outcomes = stream(det, test)
        rec.fit_warnings = det.fit_warnings
        rec.outcomes = outcomes
        rec.report = score(outcomes, test.labels)
        if write:
            path = _atomic_write(Path(cfg.output_dir) / trace_name(det_cfg.kind, seed),
                                 trace_text(outcomes, test.labels))
            rec.trace = path.name
        rec.status = "ok"
    except Exception as exc:  # one failed repeat must not stop the others
        if isinstance(exc, StreamError):
            rec.outcomes = exc.outcomes
        rec.error = f"{type(exc).__name__}: {exc}"
        log.error("repeat %d (seed %d) failed: %s", repeat, seed, rec.error)
    return rec


def run_experiment(cfg: ExperimentConfig, write=True) -> ExperimentResult:
    """All repeats, then the aggregate summary file."""
    runs = []
    for r in range(cfg.repeats):
        log.info("repeat %d/%d", r + 1, cfg.repeats)
        runs.append(run_once(cfg, r, write))
    ok = [r.report for r in runs if r.status == "ok"]
    result = ExperimentResult(cfg, runs, aggregate_runs(ok) if ok else None)
    if write:
        path = Path(cfg.output_dir) / summary_name(cfg.detector.kind, cfg.seed)
        result.summary_path = _atomic_write(path, summary_text(result.summary()))
    return result
