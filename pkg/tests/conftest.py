import numpy as np
import pytest

from sgpq import kernels as kern


def random_kernel(rng, kinds=("rbf", "linear")):
    parts = []
    for k in kinds:
        if k == "rbf":
            parts.append(kern.RBF(rng.uniform(0.3, 3.0), rng.uniform(0.3, 2.0)))
        elif k == "linear":
            parts.append(kern.Linear((rng.uniform(0.05, 1.0),)))
        else:
            parts.append(kern.Periodic(rng.uniform(0.3, 2.0), (rng.uniform(0.5, 2.0),),
                                       rng.uniform(1.0, 4.0)))
    return parts[0] if len(parts) == 1 else kern.Sum(tuple(parts))


def random_instance(rng, n_max=30, n_min=2, kinds=("rbf", "linear"), cond_max=None):
    """Random kernel, noise and 1-D data; optionally bounded cond(K + s2 I)."""
    while True:
        n = int(rng.integers(n_min, n_max + 1))
        X = rng.uniform(-3, 3, n)
        spec = random_kernel(rng, kinds)
        noise = float(rng.uniform(0.05, 1.0))
        y = np.sin(X) + 0.3 * rng.standard_normal(n)
        if cond_max is None:
            return spec, noise, X, y
        K = spec.gram(X) + noise * np.eye(n)
        if np.linalg.cond(K) <= cond_max:
            return spec, noise, X, y


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one line per acceptance criterion; shown in the terminal summary."""
    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
