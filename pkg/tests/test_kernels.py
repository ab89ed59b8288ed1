import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sgpq import kernels as kern
from sgpq.errors import InputError

from conftest import random_kernel

pos = st.floats(0.05, 20.0)


def test_rbf_at_zero_distance_is_variance():
    assert kern.eval_kernel(kern.RBF(2.0, 1.0), 0.7, 0.7) == 2.0


def test_linear_with_zero_input_is_zero():
    assert kern.eval_kernel(kern.Linear((3.0,)), 0.0, 5.5) == 0.0


def test_periodic_one_period_apart_is_variance():
    k = kern.Periodic(1.7, (0.8,), 2.5)
    assert kern.eval_kernel(k, 0.3, 0.3 + 2.5) == pytest.approx(1.7, rel=1e-14)


def test_rbf_hand_value():
    assert kern.eval_kernel(kern.RBF(1.0, 1.0), 0.0, 2.0) == pytest.approx(math.exp(-2.0), rel=1e-15)


def test_periodic_hand_value():
    k = kern.Periodic(2.0, (0.5,), 3.0)
    want = 2.0 * math.exp(-0.5 * (math.sin(math.pi * 1.0 / 3.0) / 0.5) ** 2)
    assert kern.eval_kernel(k, 0.0, 1.0) == pytest.approx(want, rel=1e-14)


def test_linear_multi_dim_hand_value():
    k = kern.Linear((2.0, 0.5))
    assert kern.eval_kernel(k, [1.0, 2.0], [3.0, -1.0]) == pytest.approx(2 * 3 - 0.5 * 2)


def test_gram_column_example():
    K = kern.gram_matrix(kern.RBF(), [0.0, 1.0], [0.0])
    np.testing.assert_allclose(K[:, 0], [1.0, math.exp(-0.5)], rtol=1e-15)


def test_gram_shapes_and_diag(rng):
    spec = random_kernel(rng, ("rbf", "linear", "periodic"))
    X = rng.normal(size=3)
    K = spec.gram(X)
    assert K.shape == (3, 3)
    assert np.array_equal(K, K.T)
    np.testing.assert_allclose(np.diag(K), [kern.eval_kernel(spec, x, x) for x in X], rtol=1e-14)
    np.testing.assert_allclose(np.diag(K), spec.diag(X), rtol=1e-14)
    assert kern.gram_matrix(spec, X, np.empty((0, 1))).shape == (3, 0)


def test_gram_entries_match_eval(rng):
    spec = random_kernel(rng, ("rbf", "linear", "periodic"))
    X, X2 = rng.normal(size=4), rng.normal(size=5)
    K = spec.gram(X, X2)
    for i in range(4):
        for j in range(5):
            assert K[i, j] == pytest.approx(kern.eval_kernel(spec, X[i], X2[j]), rel=1e-13)


def test_sum_gram_is_sum_of_children(rng):
    children = (kern.RBF(1.3, 0.7), kern.Linear((0.4,)), kern.Periodic(0.9, (1.1,), 2.0))
    s = kern.Sum(children)
    X = rng.normal(size=12)
    want = children[0].gram(X) + children[1].gram(X) + children[2].gram(X)
    assert np.array_equal(s.gram(X), want)


def test_dimension_mismatch_raises():
    with pytest.raises(InputError):
        kern.eval_kernel(kern.Linear((1.0, 1.0)), [1.0], [1.0])
    with pytest.raises(InputError):
        kern.gram_matrix(kern.RBF(), np.zeros((3, 2)), np.zeros((2, 1)))


def test_invalid_hyperparameters_raise():
    with pytest.raises(InputError):
        kern.RBF(-1.0, 1.0)
    with pytest.raises(InputError):
        kern.Periodic(1.0, (1.0,), 0.0)
    with pytest.raises(InputError):
        kern.Sum((kern.RBF(),))


def test_sum_depth_limit():
    k = kern.RBF()
    for _ in range(3):
        k = kern.Sum((k, kern.Linear()))
    assert kern.depth(k) == 4
    with pytest.raises(InputError):
        kern.Sum((k, kern.RBF()))


def test_pack_unit_variance_is_zero():
    v = kern.pack(kern.RBF(1.0, 1.0), 1.0)
    assert np.array_equal(v, np.zeros(3))
    spec, noise = kern.unpack(v, kern.RBF(5.0, 5.0))
    assert spec == kern.RBF(1.0, 1.0) and noise == 1.0


def test_pack_layout_depth_first_noise_last():
    spec = kern.Sum((kern.RBF(2.0, 3.0), kern.Linear((4.0,))))
    np.testing.assert_allclose(kern.pack(spec, 5.0), np.log([2.0, 3.0, 4.0, 5.0]))


def test_unpack_wrong_length_raises():
    with pytest.raises(InputError):
        kern.unpack(np.zeros(4), kern.RBF())


@settings(max_examples=100, deadline=None)
@given(a=pos, b=pos, c=pos, noise=pos)
def test_pack_round_trip(a, b, c, noise):
    spec = kern.Sum((kern.RBF(a, b), kern.Linear((c,))))
    v = kern.pack(spec, noise)
    spec2, noise2 = kern.unpack(v, spec)
    assert spec2 == spec
    assert noise2 == pytest.approx(noise, rel=1e-15)
    # Against a different template the values still come back to round-off.
    spec3, _ = kern.unpack(v, kern.Sum((kern.RBF(), kern.Linear())))
    np.testing.assert_allclose(np.exp(spec3.log_params()), [a, b, c], rtol=1e-15)


@settings(max_examples=100, deadline=None)
@given(v=st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_unpacked_values_positive(v):
    template = kern.Sum((kern.RBF(), kern.Periodic()))
    spec, noise = kern.unpack(np.array(v), template)
    vals = np.concatenate([spec.log_params(), [math.log(noise)]])
    assert noise > 0 and np.all(np.isfinite(vals))
    assert all(p > 0 for p in np.exp(spec.log_params()))


@settings(max_examples=100, deadline=None)
@given(x=st.floats(-10, 10), x2=st.floats(-10, 10), seed=st.integers(0, 10_000))
def test_eval_symmetric(x, x2, seed):
    spec = random_kernel(np.random.default_rng(seed), ("rbf", "linear", "periodic"))
    assert kern.eval_kernel(spec, x, x2) == kern.eval_kernel(spec, x2, x)


def test_gram_positive_definite_with_small_jitter():
    rng = np.random.default_rng(7)
    kinds = [("rbf",), ("linear",), ("periodic",), ("rbf", "linear"), ("rbf", "linear", "periodic")]
    for i in range(200):
        n = int(rng.integers(1, 21))
        X = rng.uniform(-5, 5, n)
        spec = random_kernel(rng, kinds[i % len(kinds)])
        K = spec.gram(X)
        assert np.array_equal(K, K.T)
        np.linalg.cholesky(K + 1e-8 * np.mean(np.diag(K)) * np.eye(n))


def test_kernel_dict_round_trip():
    spec = kern.Sum((kern.RBF(2.0, 0.5), kern.Linear((0.3,)), kern.Periodic(1.0, (2.0,), 7.0)))
    assert kern.kernel_from_dict(kern.kernel_to_dict(spec)) == spec
    assert kern.kernel_from_dict({"sum": [{"rbf": {}}, {"linear": {}}]}) == kern.RBF() + kern.Linear()
    with pytest.raises(InputError):
        kern.kernel_from_dict({"matern": {}})
    with pytest.raises(InputError):
        kern.kernel_from_dict({"rbf": {"bogus": 1}})


def test_backprop_matches_finite_differences(rng):
    # Adjoint contraction sum(G * K) differentiated numerically.
    spec = kern.Sum((kern.RBF(1.2, 0.8), kern.Linear((0.5,)), kern.Periodic(0.7, (1.3,), 2.2)))
    X, X2 = rng.normal(size=(5, 1)), rng.normal(size=(4, 1))
    G = rng.normal(size=(5, 4))
    dp, dX, dX2 = spec.backprop(X, X2, G)
    f = lambda s, A, B: float(np.sum(G * s.gram(A, B)))
    h = 1e-6
    v = spec.log_params()
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h
        num = (f(spec.with_log_params(v + e), X, X2) - f(spec.with_log_params(v - e), X, X2)) / (2 * h)
        assert dp[i] == pytest.approx(num, rel=1e-6, abs=1e-8)
    for i in range(5):
        e = np.zeros_like(X)
        e[i, 0] = h
        num = (f(spec, X + e, X2) - f(spec, X - e, X2)) / (2 * h)
        assert dX[i, 0] == pytest.approx(num, rel=1e-6, abs=1e-8)
    for j in range(4):
        e = np.zeros_like(X2)
        e[j, 0] = h
        num = (f(spec, X, X2 + e) - f(spec, X, X2 - e)) / (2 * h)
        assert dX2[j, 0] == pytest.approx(num, rel=1e-6, abs=1e-8)
    dp_only, a, b = spec.backprop(X, X2, G, inputs=False)
    assert a is None and b is None and np.array_equal(dp_only, dp)
