"""Command line: ``sgpq run``, ``sgpq score`` and ``sgpq synth``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from . import data_io, harness
from .detectors import DetectorKind
from .errors import InputError
from .metrics import confusion_report

KINDS = [k.value for k in DetectorKind]


def _cmd_run(args):
    if not args.config:
        raise InputError("run needs --config PATH")
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.detector is not None:
        cfg = replace(cfg, detector=replace(cfg.detector, kind=args.detector))
    if args.output is not None:
        cfg = replace(cfg, output_dir=args.output)
    result = harness.run_experiment(cfg)
    agg = result.aggregate
    for run in result.runs:
        if run.status == "ok":
            print(f"repeat {run.repeat} seed {run.seed}: f1={run.report.f1:.4f} "
                  f"precision={run.report.precision:.4f} recall={run.report.recall:.4f}")
        else:
            print(f"repeat {run.repeat} seed {run.seed}: FAILED {run.error}")
    if agg is not None:
        print(f"{cfg.detector.kind.value}: mean f1 {agg.mean_f1:.4f} +/- {agg.std_f1:.4f} "
              f"over {agg.n_runs} run(s)")
    print(f"summary: {result.summary_path}")
    return 1 if result.n_failed else 0


def _cmd_score(args):
    flags, labels = harness.read_trace(args.trace)
    if args.labels:
        if args.labels.endswith(".csv") and not args.intervals:
            labels = data_io.load_series_csv(args.labels).labels
        else:
            labels = data_io.attach_labels(
                data_io.TimeSeries(flags * 0.0, flags * 0.0),
                data_io.load_label_intervals(args.labels)).labels
    if labels is None:
        raise InputError("trace has no label column; pass --labels")
    report = confusion_report(flags, labels)
    text = json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    if args.output:
        harness._atomic_write(Path(args.output), text)
    sys.stdout.write(text)
    return 0


def _synth_spec(args):
    if args.config:
        raw = yaml.safe_load(Path(args.config).read_text())
        raw = raw.get("synth", raw) if isinstance(raw, dict) else raw
        if not isinstance(raw, dict):
            raise InputError("synth config must be a mapping")
        return harness.synth_spec_from_dict(raw)
    anomaly = data_io.AnomalySpec(
        magnitude=args.magnitude, indices=tuple(args.spikes or ()), width=args.width,
        onset=args.onset, duration=args.duration, onset_span=args.onset_span)
    return data_io.SynthSpec(kind=args.kind, length=args.length,
                             points_per_day=args.points_per_day, amplitude=args.amplitude,
                             noise_std=args.noise_std, start=args.start, anomaly=anomaly)


def _cmd_synth(args):
    spec = _synth_spec(args)
    series = data_io.synth_stream(spec, seed=args.seed or 0)
    out = Path(args.output or f"synth_{spec.kind}_seed{args.seed or 0}.csv")
    if out.suffix != ".csv":
        out = out / f"synth_{spec.kind}_seed{args.seed or 0}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    data_io.write_series_csv(series, out)
    print(f"wrote {len(series)} points ({int(series.labels.sum())} labeled abnormal) to {out}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML or JSON config file")
    common.add_argument("--output", metavar="DIR", help="output directory (or file for synth/score)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--detector", choices=KINDS, help="override the detector kind")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sgpq", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("run", parents=[common], help="run an experiment from a config file")

    s = sub.add_parser("score", parents=[common], help="re-score an existing trace file")
    s.add_argument("trace", help="trace CSV written by 'run'")
    s.add_argument("--labels", help="labels: series CSV with a label column, or an interval file")
    s.add_argument("--intervals", action="store_true", help="treat --labels as an interval file")

    g = sub.add_parser("synth", parents=[common], help="write a synthetic labeled series")
    g.add_argument("--kind", choices=data_io.SYNTH_KINDS, default="spike")
    g.add_argument("--length", type=int, default=2000)
    g.add_argument("--points-per-day", type=int, default=960)
    g.add_argument("--amplitude", type=float, default=1.5)
    g.add_argument("--noise-std", type=float, default=0.05)
    g.add_argument("--start", default="2014-04-01 20:00:00")
    g.add_argument("--magnitude", type=float, default=8.0, help="in sample std of the clean series")
    g.add_argument("--spikes", type=int, nargs="*", help="spike start indices")
    g.add_argument("--width", type=int, default=1)
    g.add_argument("--onset", type=int, default=0)
    g.add_argument("--duration", type=int, default=0)
    g.add_argument("--onset-span", type=int, default=20)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "score": _cmd_score, "synth": _cmd_synth}[args.command]
    try:
        return handler(args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
