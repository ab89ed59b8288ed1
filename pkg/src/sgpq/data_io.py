"""Series ingestion, splits and synthetic streams.

The model input is the time of day: minutes since the most recent
midnight, scaled by 0.01, so a day maps onto [0, 14.4).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InputError, ParseError

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"
MINUTE_SCALE = 0.01
SYNTH_KINDS = ("daily_jump_up", "daily_flat_middle", "level_shift_drift", "spike")


@dataclass
class TimeSeries:
    t: np.ndarray
    y: np.ndarray
    labels: Optional[np.ndarray] = None
    source_name: str = ""
    timestamps: Optional[List[str]] = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.t.shape != self.y.shape or self.t.ndim != 1:
            raise InputError(f"t and y must be equal-length vectors, got {self.t.shape}, {self.y.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if self.labels.shape != self.t.shape:
                raise InputError(f"{self.labels.size} labels for {self.t.size} points")
            if not np.all((self.labels == 0) | (self.labels == 1)):
                raise InputError("labels must be 0 or 1")
        if self.timestamps is not None and len(self.timestamps) != self.t.size:
            raise InputError("timestamps do not align with points")

    def __len__(self):
        return self.t.size

    def slice(self, start, stop=None):
        sl = slice(start, stop)
        return TimeSeries(
            self.t[sl].copy(), self.y[sl].copy(),
            None if self.labels is None else self.labels[sl].copy(),
            self.source_name,
            None if self.timestamps is None else list(self.timestamps[sl]))


@dataclass
class ValidationSpec:
    start: Optional[int] = None
    stop: Optional[int] = None
    noise_scale: float = 0.01
    length: int = 200


@dataclass
class SplitSpec:
    initial_train_len: int = 1000
    validation: Optional[ValidationSpec] = None

    def __post_init__(self):
        if self.initial_train_len < 2:
            raise InputError("initial_train_len must be >= 2")


# -- timestamps -------------------------------------------------------------------

def parse_timestamp(ts: str) -> datetime:
    try:
        return datetime.strptime(ts.strip(), TIMESTAMP_FORMAT)
    except (ValueError, AttributeError):
        raise ParseError(f"malformed timestamp {ts!r}; expected YYYY-MM-DD hh:mm:ss") from None


def quantize_timestamp(ts: str) -> float:
    """Minutes since that day's midnight, times 0.01.  The date is dropped."""
    d = parse_timestamp(ts)
    return (60 * d.hour + d.minute + d.second / 60.0) * MINUTE_SCALE


# -- files --------------------------------------------------------------------------

def _parse_label(raw, row):
    try:
        v = int(float(raw))
    except ValueError:
        raise ParseError(f"row {row}: label {raw!r} is not 0/1") from None
    if v not in (0, 1):
        raise ParseError(f"row {row}: label {raw!r} is not 0/1")
    return v


def load_series_csv(path, value_column: str = "value", label_column: Optional[str] = "label"):
    """Read a ``timestamp,<value_column>[,label]`` CSV into a TimeSeries.

    Row numbers in errors count data rows from 1.  The label column is read
    only when present in the header.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise ParseError(f"{path}: empty file")
        if "timestamp" not in header:
            raise ParseError(f"{path}: no 'timestamp' column in header {header}")
        if value_column not in header:
            raise ParseError(f"{path}: no {value_column!r} column in header {header}")
        with_labels = label_column is not None and label_column in header
        stamps, ts, ys, labels = [], [], [], []
        prev = None
        for row, rec in enumerate(reader, start=1):
            stamp = rec["timestamp"]
            try:
                d = parse_timestamp(stamp)
            except ParseError as exc:
                raise ParseError(f"{path}: row {row}: {exc}") from None
            if prev is not None and d <= prev:
                raise ParseError(f"{path}: row {row}: timestamp {stamp!r} is not increasing")
            prev = d
            try:
                y = float(rec[value_column])
            except (TypeError, ValueError):
                raise ParseError(f"{path}: row {row}: value {rec[value_column]!r} is not numeric") from None
            if not math.isfinite(y):
                raise ParseError(f"{path}: row {row}: value {rec[value_column]!r} is not finite")
            stamps.append(stamp.strip())
            ts.append(quantize_timestamp(stamp))
            ys.append(y)
            if with_labels:
                labels.append(_parse_label(rec[label_column], row))
    if not ts:
        raise ParseError(f"{path}: no data rows")
    return TimeSeries(np.array(ts), np.array(ys), np.array(labels) if with_labels else None,
                      path.stem, stamps)


def write_series_csv(series: TimeSeries, path, value_column: str = "value"):
    if series.timestamps is None:
        raise InputError("series has no raw timestamps to write")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ["timestamp", value_column] + (["label"] if series.labels is not None else [])
        w.writerow(cols)
        for i, stamp in enumerate(series.timestamps):
            row = [stamp, repr(float(series.y[i]))]
            if series.labels is not None:
                row.append(int(series.labels[i]))
            w.writerow(row)
    return path


def load_label_intervals(path) -> List[Tuple[int, int]]:
    """Read ``start,stop`` index pairs (stop exclusive), one per line.

    Blank lines, ``#`` comments and a non-numeric header line are skipped.
    """
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.replace(";", ",").split(",")]
        try:
            a, b = int(parts[0]), int(parts[1])
        except (ValueError, IndexError):
            if not out and lineno == 1:
                continue
            raise ParseError(f"{path}: line {lineno}: expected 'start,stop', got {line!r}") from None
        out.append((a, b))
    return out


def attach_labels(series: TimeSeries, ranges: Optional[Sequence[Tuple[int, int]]] = None,
                  column: Optional[Sequence[int]] = None) -> TimeSeries:
    """Return a copy of ``series`` carrying binary labels.

    Pass either index ranges ``[start, stop)`` or an aligned 0/1 column.
    """
    n = len(series)
    if column is not None:
        labels = np.asarray(column, dtype=int)
        if labels.shape != (n,):
            raise InputError(f"label column of length {labels.size} for {n} points")
    else:
        labels = np.zeros(n, dtype=int)
        for a, b in ranges or ():
            if not 0 <= a <= b <= n:
                raise InputError(f"label range [{a}, {b}) outside series of length {n}")
            labels[a:b] = 1
    return replace(series, labels=labels)


# -- splits ---------------------------------------------------------------------------

def initial_split(series: TimeSeries, spec: SplitSpec):
    """(train, test): the first ``initial_train_len`` points, then the rest."""
    n0 = spec.initial_train_len
    if n0 >= len(series):
        raise InputError(f"initial_train_len={n0} leaves no test points in a series of {len(series)}")
    return series.slice(0, n0), series.slice(n0)


def make_validation(series: TimeSeries, segment: Tuple[int, int], noise_scale: float = 0.01,
                    seed: int = 0) -> TimeSeries:
    """Noisy copy of ``series[start:stop]`` with its labels.

    The perturbation is zero-mean Gaussian with standard deviation
    ``noise_scale`` times the sample std of the segment values.
    """
    start, stop = segment
    if series.labels is None:
        raise InputError("validation needs a labeled series")
    if not 0 <= start < stop <= len(series):
        raise InputError(f"segment [{start}, {stop}) outside series of length {len(series)}")
    seg = series.slice(start, stop)
    if seg.labels.min() == seg.labels.max():
        raise InputError(f"segment [{start}, {stop}) does not contain both normal and abnormal points")
    if noise_scale < 0:
        raise InputError("noise_scale must be >= 0")
    sd = float(np.std(seg.y, ddof=1)) if len(seg) > 1 else 0.0
    rng = np.random.default_rng(seed)
    seg.y = seg.y + noise_scale * sd * rng.standard_normal(len(seg))
    seg.source_name = f"{series.source_name}:validation"
    return seg


def default_validation_segment(series: TimeSeries, start_at: int, length: int = 200):
    """Window of ``length`` points centred on the first anomaly at or after ``start_at``.

    Shifted as needed so it stays inside the series and includes at least
    one normal point.
    """
    if series.labels is None:
        raise InputError("series has no labels")
    idx = np.flatnonzero(series.labels[start_at:])
    if idx.size == 0:
        raise InputError("no labeled anomaly to build a validation segment from")
    first = start_at + int(idx[0])
    n = len(series)
    length = min(length, n)
    a = max(0, min(first - length // 2, n - length))
    return a, a + length


# -- synthetic streams ---------------------------------------------------------------

@dataclass
class AnomalySpec:
    """Where and how big the injected behaviour is.

    ``magnitude`` is in units of the sample std of the clean series.  For
    ``spike`` the ``indices`` list gives spike starts, each ``width`` long;
    the window kinds use ``onset`` and ``duration``; ``level_shift_drift``
    labels only the first ``onset_span`` points after ``onset``.
    """

    magnitude: float = 8.0
    indices: Sequence[int] = ()
    width: int = 1
    onset: int = 0
    duration: int = 0
    onset_span: int = 20


@dataclass
class SynthSpec:
    kind: str = "spike"
    length: int = 2000
    points_per_day: int = 960
    amplitude: float = 1.5
    offset: float = 0.0
    noise_std: float = 0.05
    start: str = "2014-04-01 20:00:00"
    anomaly: AnomalySpec = field(default_factory=AnomalySpec)


def synth_stream(spec: SynthSpec, seed: int = 0) -> TimeSeries:
    """Sinusoidal daily pattern plus noise plus one injected behaviour."""
    if spec.kind not in SYNTH_KINDS:
        raise InputError(f"unknown synthetic kind {spec.kind!r}; choose from {SYNTH_KINDS}")
    n = spec.length
    if n < 2:
        raise InputError("length must be >= 2")
    if spec.points_per_day < 1 or 86400 % spec.points_per_day:
        raise InputError("points_per_day must divide 86400 so timestamps land on whole seconds")
    a = spec.anomaly
    step = timedelta(seconds=86400 // spec.points_per_day)
    t0 = parse_timestamp(spec.start)
    stamps = [(t0 + i * step).strftime(TIMESTAMP_FORMAT) for i in range(n)]
    t = np.array([quantize_timestamp(s) for s in stamps])
    rng = np.random.default_rng(seed)
    base = spec.offset + spec.amplitude * np.sin(2.0 * np.pi * t / 14.4)
    y = base + spec.noise_std * rng.standard_normal(n)
    scale = a.magnitude * float(np.std(y, ddof=1))
    labels = np.zeros(n, dtype=int)

    if spec.kind == "spike":
        if a.width < 1:
            raise InputError("spike width must be >= 1")
        for i in a.indices:
            if not (0 <= i and i + a.width <= n):
                raise InputError(f"spike at {i} (width {a.width}) outside series of length {n}")
            y[i:i + a.width] += scale
            labels[i:i + a.width] = 1
    else:
        if not 0 <= a.onset < n:
            raise InputError(f"onset {a.onset} outside series of length {n}")
        if spec.kind == "level_shift_drift":
            if a.onset_span < 1:
                raise InputError("onset_span must be >= 1")
            y[a.onset:] += scale
            labels[a.onset:a.onset + a.onset_span] = 1
        else:
            if a.duration < 1 or a.onset + a.duration > n:
                raise InputError(f"anomaly window [{a.onset}, {a.onset + a.duration}) invalid for length {n}")
            sl = slice(a.onset, a.onset + a.duration)
            if spec.kind == "daily_jump_up":
                y[sl] += scale
            else:
                y[sl] = spec.offset + spec.noise_std * rng.standard_normal(a.duration)
            labels[sl] = 1
    return TimeSeries(t, y, labels, f"synth_{spec.kind}", stamps)
