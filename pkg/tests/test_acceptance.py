"""Acceptance criteria 1-10, one test each.

Each test records a PASS/FAIL line (collected in the terminal summary) before
asserting.  The experiment tests run the shipped configs through the harness
and take several minutes; deselect them with ``-m "not slow"``.
"""
import csv
import math
import os
import time
from dataclasses import replace
from pathlib import Path

import mpmath
import numpy as np
import pytest

from sgpq import detectors as D
from sgpq import harness
from sgpq import kernels as kern
from sgpq.data_io import SynthSpec, synth_stream
from sgpq.exact_gp import ExactGPModel, log_marginal_likelihood, predict
from sgpq.metrics import confusion_report, report_from_counts
from sgpq.sparse_gp import SparseGPModel, elbo, init_inducing, sgp_predict
from sgpq.training import OptimizerConfig, numerical_gradient, objective_gradient

from conftest import random_instance

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def rel_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-3)))


def test_c01_sparse_exact_equivalence(acceptance):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst_bound = worst_mean = worst_var = 0.0
    for _ in range(50):
        spec, noise, X, y = random_instance(rng, n_max=30, cond_max=1e8)
        s, e = SparseGPModel(spec, noise, X), ExactGPModel(spec, noise)
        lml = log_marginal_likelihood(e, X, y)
        worst_bound = max(worst_bound, abs(elbo(s, X, y) - lml) / abs(lml))
        for xs in rng.uniform(-4, 4, 3):
            ps, pe = sgp_predict(s, X, y, xs), predict(e, X, y, xs)
            worst_mean = max(worst_mean, abs(ps.mean - pe.mean) / max(abs(pe.mean), pe.std))
            worst_var = max(worst_var, abs(ps.variance - pe.variance) / pe.variance)
    elapsed = time.perf_counter() - start
    ok = max(worst_bound, worst_mean, worst_var) < 1e-6 and elapsed < 5
    acceptance(1, ok, f"bound gap {worst_bound:.1e}, mean {worst_mean:.1e}, "
                      f"variance {worst_var:.1e}, {elapsed:.2f} s")
    assert ok


def test_c02_lower_bound(acceptance):
    rng = np.random.default_rng(102)
    worst = -math.inf
    for _ in range(100):
        spec, noise, X, y = random_instance(rng, n_max=40, n_min=3)
        Z = rng.uniform(-3, 3, int(rng.integers(1, len(X))))
        lml = log_marginal_likelihood(ExactGPModel(spec, noise), X, y)
        worst = max(worst, elbo(SparseGPModel(spec, noise, Z), X, y) - lml)
    ok = worst <= 1e-8
    acceptance(2, ok, f"max(ELBO - LML) = {worst:.3e} over 100 instances")
    assert ok


def test_c03_gradients(acceptance):
    rng = np.random.default_rng(103)
    worst_exact = worst_sparse = 0.0
    for _ in range(20):
        spec, noise, X, y = random_instance(rng, n_max=12, n_min=4)
        m = ExactGPModel(spec, noise)
        worst_exact = max(worst_exact, rel_err(objective_gradient(m, X, y), numerical_gradient(m, X, y)))
        s = SparseGPModel(spec, noise, rng.uniform(-3, 3, 3))
        worst_sparse = max(worst_sparse, rel_err(objective_gradient(s, X, y), numerical_gradient(s, X, y)))
    ok = max(worst_exact, worst_sparse) < 1e-4
    acceptance(3, ok, f"max relative error exact {worst_exact:.1e}, sparse incl. Z {worst_sparse:.1e}")
    assert ok


def test_c04_q_identities(acceptance):
    rng = np.random.default_rng(104)
    at0 = abs(D.modified_q(0.0) - 2 / 3)
    xs = rng.uniform(-20, 20, 1000)
    even = max(abs(D.modified_q(x) - D.modified_q(-x)) for x in xs)
    grid = [D.modified_q(x) for x in np.linspace(0, 10, 100)]
    decreasing = all(b < a for a, b in zip(grid, grid[1:]))
    ok = at0 < 1e-12 and even < 1e-12 and decreasing
    acceptance(4, ok, f"|Q(0) - 2/3| = {at0:.1e}, max odd part {even:.1e}, strictly decreasing {decreasing}")
    assert ok


def test_c05_closed_forms(acceptance):
    rng = np.random.default_rng(105)
    mpmath.mp.dps = 40
    worst = 0.0
    for _ in range(1000):
        y, mu = rng.uniform(-10, 10, 2)
        sd = rng.uniform(0.05, 5)
        p = float(mpmath.npdf(y, mu, sd))
        b = float(mpmath.ncdf(1.96 - abs(mpmath.mpf(mu) - y) / sd))
        worst = max(worst, abs(D.gaussian_likelihood(y, mu, sd * sd) - p) / max(p, 1e-300),
                    abs(D.beta_score(y, mu, sd) - b) / max(b, 1e-300))
    examples = [
        (confusion_report([1, 1, 0, 1, 0], [1, 1, 0, 1, 0]).f1, 1.0),
        (report_from_counts(4, 1, 1).precision, 0.8),
        (report_from_counts(4, 1, 1).recall, 0.8),
        (confusion_report([0, 0, 0], [0, 1, 1]).f1, 0.0),
        (confusion_report([1, 0, 1, 0], [1, 1, 0, 0]).f1, 0.5),
    ]
    exact = all(got == want for got, want in examples)
    f1_48 = abs(report_from_counts(4, 1, 1).f1 - 0.8)
    ok = worst < 1e-10 and exact and f1_48 < 1e-15
    acceptance(5, ok, f"max relative error vs mpmath {worst:.1e}, confusion examples exact {exact}")
    assert ok


def _step_time(kind, q, series, reps=5):
    opt = OptimizerConfig(initial_iterations=5, warm_iterations=10)
    k = kern.Sum((kern.RBF(), kern.Linear()))
    det = D.make_detector(D.DetectorConfig(kind=kind, q=q, M=100, epsilon_p=1e-3), k, opt,
                          series.t[:q], series.y[:q])
    times = []
    for i in range(reps):
        t0 = time.perf_counter()
        det.step(series.t[q + i], series.y[q + i])
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def test_c06_complexity(acceptance):
    series = synth_stream(SynthSpec(kind="spike", length=1100, points_per_day=960), seed=0)
    start = time.perf_counter()
    sgp = {q: _step_time("sgp-q", q, series) for q in (250, 500, 1000)}
    exact = {q: _step_time("gpr-ad", q, series) for q in (250, 500, 1000)}
    elapsed = time.perf_counter() - start
    r_sgp, r_exact = sgp[1000] / sgp[250], exact[1000] / exact[250]
    ok = r_sgp < 8 and r_exact > r_sgp and elapsed < 300
    acceptance(6, ok, f"t(1000)/t(250): sparse {r_sgp:.2f}, exact {r_exact:.2f}, {elapsed:.0f} s")
    assert ok


# -- experiments ----------------------------------------------------------------------------

def _run(config, kind, out):
    cfg = harness.load_config(CONFIGS / config)
    cfg = replace(cfg, output_dir=str(out),
                          detector=replace(cfg.detector, kind=kind))
    start = time.perf_counter()
    result = harness.run_experiment(cfg)
    return cfg, result, time.perf_counter() - start, result.summary_path.read_bytes()


@pytest.fixture(scope="module")
def experiments(tmp_path_factory):
    """First runs of the level-shift and spike experiments, shared with criterion 10."""
    out = tmp_path_factory.mktemp("first")
    return {"out": out, "runs": {}}


def _cached(experiments, config, kind):
    key = (config, kind)
    if key not in experiments["runs"]:
        out = experiments["out"] / f"{Path(config).stem}_{kind}"
        experiments["runs"][key] = _run(config, kind, out)
    return experiments["runs"][key]


def _flags_absolute(cfg, result):
    """Absolute stream indices flagged in the single repeat."""
    run = result.runs[0]
    offset = cfg.split.initial_train_len
    return np.array([o.step_index + offset for o in run.outcomes if o.is_anomaly], dtype=int)


@pytest.mark.slow
def test_c07_drift_adaptation(acceptance, experiments):
    cfg_s, res_s, t_s, _ = _cached(experiments, "drift_level_shift.yaml", "sgp-q")
    cfg_a, res_a, t_a, _ = _cached(experiments, "drift_level_shift.yaml", "gpr-adam")
    assert res_s.n_failed == 0 and res_a.n_failed == 0
    onset = cfg_s.dataset["synth"]["anomaly"]["onset"]
    limit = onset + 3 * cfg_s.detector.W_short
    n = cfg_s.dataset["synth"]["length"]
    tail = n - 1300
    fs, fa = _flags_absolute(cfg_s, res_s), _flags_absolute(cfg_a, res_a)
    after = fs[fs >= onset]
    last = int(after.max()) if after.size else onset
    frac_s = np.sum(fs >= 1300) / tail
    frac_a = np.sum(fa >= 1300) / tail
    elapsed = t_s + t_a
    ok = last <= limit and frac_s < 0.05 and frac_a >= 0.90 and elapsed < 600
    acceptance(7, ok, f"SGP-Q last flag at {last} (limit {limit}), flags in [1300, {n}): "
                      f"SGP-Q {frac_s:.1%}, GPR-ADAM {frac_a:.1%}, {elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_c08_spike_detection(acceptance, experiments):
    cfg, res, elapsed, _ = _cached(experiments, "spikes.yaml", "sgp-q")
    assert res.n_failed == 0 and len(res.runs) == 5
    f1 = [r.report.f1 for r in res.runs]
    ok = res.aggregate.mean_f1 >= 0.8
    acceptance(8, ok, f"mean F1 {res.aggregate.mean_f1:.3f} +/- {res.aggregate.std_f1:.3f} "
                      f"over 5 repeats {[round(v, 3) for v in f1]}, {elapsed:.0f} s")
    assert ok


def _nab_datasets(root):
    for csv_path in sorted(root.glob("*.csv")):
        labels = csv_path.with_suffix(".labels")
        with open(csv_path) as fh:
            header = next(csv.reader(fh), [])
        if labels.exists():
            yield csv_path, {"path": str(csv_path), "labels": str(labels)}
        elif "label" in header:
            yield csv_path, {"path": str(csv_path)}


def test_c09_nab_optional(acceptance, tmp_path):
    root = os.environ.get("SGPQ_NAB_DIR")
    if not root or not Path(root).is_dir():
        acceptance(9, True, "skipped: set SGPQ_NAB_DIR to a directory of labeled NAB series")
        pytest.skip("NAB files not supplied")
    rows = {}
    for csv_path, dataset in _nab_datasets(Path(root)):
        for kind in ("gpr-ad", "gpr-adam", "gpr-iadam", "sgp-q"):
            cfg = harness.config_from_dict({"dataset": dataset, "detector": {"kind": kind},
                                            "repeats": 1, "output_dir": str(tmp_path)})
            res = harness.run_experiment(cfg)
            rows.setdefault(csv_path.stem, {})[kind] = res.aggregate.mean_f1 if res.aggregate else float("nan")
    wins = sum(all(r["sgp-q"] >= r[k] for k in r if k != "sgp-q") for r in rows.values())
    jumps = rows.get("art_daily_jumpsup", {}).get("sgp-q")
    detail = f"SGP-Q best or tied on {wins}/{len(rows)} datasets"
    if jumps is not None:
        detail += f"; art_daily_jumpsup F1 {100 * jumps:.2f} vs 99.20 reported"
    # Non-binding: deviations are reported, never failed.
    acceptance(9, True, detail)


@pytest.mark.slow
def test_c10_determinism(acceptance, experiments, tmp_path):
    pairs = [("drift_level_shift.yaml", "sgp-q"), ("drift_level_shift.yaml", "gpr-adam"),
             ("spikes.yaml", "sgp-q")]
    same = []
    for config, kind in pairs:
        first = _cached(experiments, config, kind)[3]
        second = _run(config, kind, tmp_path / f"{Path(config).stem}_{kind}")[3]
        same.append(first == second)
    ok = all(same)
    acceptance(10, ok, "byte-identical summaries on rerun: " +
               ", ".join(f"{c}/{k} {s}" for (c, k), s in zip(pairs, same)))
    assert ok
