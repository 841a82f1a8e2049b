import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import special

from eigopt import kernels

IMPLS = kernels.backends()
finite = st.floats(-700, 700, allow_nan=False)
with_inf = st.one_of(finite, st.just(-np.inf))


@pytest.mark.parametrize("name", sorted(IMPLS))
@settings(max_examples=60, deadline=None)
@given(a=arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6), st.integers(1, 3)),
                elements=with_inf), axis=st.integers(0, 2))
def test_logsumexp_matches_scipy(name, a, axis):
    with np.errstate(divide="ignore", invalid="ignore"):
        want = special.logsumexp(a, axis=axis)
    got = kernels.logsumexp(a, axis, impl=IMPLS[name])
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", sorted(IMPLS))
@settings(max_examples=60, deadline=None)
@given(a=arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=finite))
def test_softmax_sums_to_one(name, a):
    w = kernels.softmax(a, -1, impl=IMPLS[name])
    np.testing.assert_allclose(w.sum(-1), 1.0, rtol=1e-12)
    np.testing.assert_allclose(w, special.softmax(a, axis=-1), rtol=1e-10, atol=1e-300)


@pytest.mark.parametrize("name", sorted(IMPLS))
@settings(max_examples=60, deadline=None)
@given(x=arrays(np.float64, st.integers(1, 50), elements=st.floats(-800, 800)))
def test_elementwise_maps(name, x):
    impl = IMPLS[name]
    np.testing.assert_allclose(kernels.sigmoid(x, impl=impl), special.expit(x), rtol=1e-13, atol=1e-300)
    np.testing.assert_allclose(kernels.log_sigmoid(x, impl=impl), special.log_expit(x), rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(kernels.softplus(x, impl=impl), np.logaddexp(0.0, x), rtol=1e-13, atol=1e-300)


def test_backends_agree_on_large_input():
    if "cython" not in IMPLS:
        pytest.skip("compiled extension not built")
    a = np.random.default_rng(0).standard_normal((50, 101, 3)) * 30
    np.testing.assert_allclose(kernels.logsumexp(a, 1, impl=IMPLS["cython"]),
                               kernels.logsumexp(a, 1, impl=IMPLS["python"]), rtol=1e-14)


def test_all_minus_inf_row():
    a = np.full((2, 3), -np.inf)
    for impl in IMPLS.values():
        assert np.all(kernels.logsumexp(a, -1, impl=impl) == -np.inf)
        assert np.all(kernels.softmax(a, -1, impl=impl) == 0.0)


def test_pure_python_switch():
    env = dict(os.environ, EIGOPT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from eigopt import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_benchmark_script_runs():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    out = subprocess.run([sys.executable, os.path.join(root, "benchmarks", "bench_kernels.py"),
                          "--repeat", "1", "--number", "1"], capture_output=True, text=True, check=True)
    assert "logsumexp" in out.stdout
