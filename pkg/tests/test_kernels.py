import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasegain import _kernels
from phasegain.lti import evaluate

from conftest import SHELL_A, random_stable

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not importable")


def unit_columns(rng, n, k):
    x = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
    return x / np.linalg.norm(x, axis=0)


def test_shell_points_numpy_examples():
    x = np.eye(3, dtype=complex)
    pts = _kernels.shell_points(SHELL_A, x, use_numba=False)
    assert np.allclose(pts[:, 0] + 1j * pts[:, 1], np.diag(SHELL_A))
    assert np.allclose(pts[:, 2], np.sum(np.abs(SHELL_A) ** 2, axis=0))


def test_freq_response_numpy_matches_evaluate():
    g = random_stable(np.random.default_rng(0), 3, 2)
    s = np.array([0.0, 1j, 2 + 3j])
    out = _kernels.freq_response(g.a, g.b, g.c, g.d, s, use_numba=False)
    for k in range(3):
        assert np.allclose(out[k], evaluate(g, s[k]), atol=1e-12)


def test_static_freq_response():
    d = np.array([[2.0]])
    out = _kernels.freq_response(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), d,
                                 np.array([1j, 2j]), use_numba=False)
    assert out.shape == (2, 1, 1) and np.allclose(out, 2.0)


@needs_numba
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5))
@settings(max_examples=20)
def test_shell_points_backends_agree(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    x = unit_columns(rng, n, 50)
    assert np.allclose(_kernels.shell_points(a, x, use_numba=True),
                       _kernels.shell_points(a, x, use_numba=False), atol=1e-12)


@needs_numba
@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 5), st.integers(1, 3))
@settings(max_examples=20)
def test_freq_response_backends_agree(seed, nx, nio):
    rng = np.random.default_rng(seed)
    g = random_stable(rng, nx, nio) if nx else None
    if g is None:
        a, b, c = np.zeros((0, 0)), np.zeros((0, nio)), np.zeros((nio, 0))
        d = rng.normal(size=(nio, nio))
    else:
        a, b, c, d = g.a, g.b, g.c, g.d
    s = 1j * rng.uniform(0, 20, size=30) + rng.uniform(0, 1, size=30)
    nb = _kernels.freq_response(a, b, c, d, s, use_numba=True)
    npy = _kernels.freq_response(a, b, c, d, s, use_numba=False)
    assert np.allclose(nb, npy, atol=1e-10, rtol=1e-9)


@needs_numba
@pytest.mark.parametrize("r", [0.0, 4.0, 8.0])
@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_refine_angle_backends_agree(r, sign):
    x0 = unit_columns(np.random.default_rng(1), 3, 16)
    f1, ok1, _ = _kernels.refine_extreme_angle(SHELL_A, x0, r, 0.3, sign, 80, use_numba=True)
    f2, ok2, _ = _kernels.refine_extreme_angle(SHELL_A, x0, r, 0.3, sign, 80, use_numba=False)
    assert np.array_equal(ok1, ok2)
    assert np.allclose(f1[ok1], f2[ok2], atol=1e-8)


@needs_numba
@pytest.mark.parametrize("theta", [0.2, 0.9, 1.8])
@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_refine_gain_backends_agree(theta, sign):
    a = np.diag([2 * np.exp(2j), 1.0, 0.5j])
    x0 = unit_columns(np.random.default_rng(2), 3, 16)
    f1, ok1, _ = _kernels.refine_constrained_gain(a, x0, theta, sign, 80, use_numba=True)
    f2, ok2, _ = _kernels.refine_constrained_gain(a, x0, theta, sign, 80, use_numba=False)
    assert np.array_equal(ok1, ok2)
    assert np.allclose(f1[ok1], f2[ok2], atol=1e-8)


def test_refine_angle_improves_on_seed():
    x0 = unit_columns(np.random.default_rng(4), 3, 8)
    z0 = _kernels.shell_points(SHELL_A, x0, use_numba=False)
    f, ok, x = _kernels.refine_extreme_angle(SHELL_A, x0, 0.0, 0.0, 1.0, 100, use_numba=False)
    assert np.all(ok)
    assert np.all(f >= np.arctan2(z0[:, 1], z0[:, 0]) - 1e-12)
    assert np.allclose(np.linalg.norm(x, axis=0), 1.0)


@pytest.mark.parametrize("flag,want", [("0", "numpy"), ("1", "numba")])
def test_env_switch(flag, want):
    if want == "numba" and not _kernels.HAVE_NUMBA:
        pytest.skip("numba not importable")
    env = dict(os.environ, PHASEGAIN_NUMBA=flag)
    r = subprocess.run([sys.executable, "-c",
                        "from phasegain import _kernels; print(_kernels.backend())"],
                       capture_output=True, text=True, env=env)
    assert r.stdout.strip() == want
