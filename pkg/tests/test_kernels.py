import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ztvqp import _kernels
from ztvqp._kernels import _pykernels as pure

compiled = _kernels.compiled
needs_ext = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")


def problem_args(seed, n, m, l):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal
    mm = g((n, n))
    coeffs = [mm @ mm.T + np.eye(n), g(n), g((m, n)), g(m), g((l, n)), np.abs(g(l)) + 0.1]
    dots = [0.3 * g(c.shape) for c in coeffs]
    dots[0] = dots[0] + dots[0].T
    return coeffs, dots, g(n + m + l), 0.1 * g(n + m + l)


@needs_ext
@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 5), st.integers(0, 3), st.integers(0, 6),
       st.integers(0, 6), st.floats(0.0, 2.0))
def test_rhs_parity(seed, n, m, l, code, t):
    m = min(m, n)
    coeffs, dots, z, delta = problem_args(seed, n, m, l)
    params = np.array([2.0, 0.5, 0.5, 0.5, 1.0, 0.4, 0.2, 1e-4, 1e-4])
    a = pure.znn_rhs(*coeffs, *dots, z, 1e-6, 1.3, code, params, t, delta)
    b = compiled.znn_rhs(*coeffs, *dots, z, 1e-6, 1.3, code, params, t, delta)
    assert a[1] == pytest.approx(b[1], rel=1e-12, abs=1e-300)
    if a[2] < 1e8:
        scale = max(1.0, np.max(np.abs(a[0])))
        assert np.max(np.abs(a[0] - b[0])) <= 1e-9 * scale * a[2]
        assert b[2] == pytest.approx(a[2], rel=1e-6)


@needs_ext
@given(st.lists(st.floats(-30, 30), min_size=1, max_size=10), st.integers(0, 6),
       st.floats(0.0, 2.0))
def test_activation_parity(eps, code, t):
    params = np.array([2.0, 0.5, 0.5, 0.5, 1.0, 0.4, 0.2, 1e-4, 1e-4])
    e = np.array(eps)
    assert np.allclose(pure.activation(code, e, t, params), compiled.activation(code, e, t, params),
                       rtol=1e-12, atol=0)


@needs_ext
@given(st.integers(0, 10 ** 6))
def test_residual_and_kinematics_parity(seed):
    coeffs, _, z, _ = problem_args(seed, 4, 2, 6)
    assert pure.residual_norm(*coeffs, z, 1e-6) == pytest.approx(compiled.residual_norm(*coeffs, z, 1e-6),
                                                                 rel=1e-13)
    rng = np.random.default_rng(seed)
    dh = np.column_stack([rng.uniform(0, 0.3, 7), rng.uniform(-np.pi, np.pi, 7),
                          rng.uniform(0, 0.4, 7), rng.uniform(-1, 1, 7)])
    theta = rng.uniform(-np.pi, np.pi, 7)
    p1, j1 = pure.dh_fk_jac(dh, theta)
    p2, j2 = compiled.dh_fk_jac(dh, theta)
    assert np.allclose(p1, p2, atol=1e-14) and np.allclose(j1, j2, atol=1e-14)


def test_unknown_code_rejected():
    for mod in filter(None, (pure, compiled)):
        with pytest.raises(ValueError):
            mod.activation(99, np.ones(2), 0.0, np.ones(9))


def test_singular_system_reports_infinite_condition():
    args = [np.eye(2), np.zeros(2), np.ones((2, 2)), np.zeros(2), np.zeros((0, 2)), np.zeros(0)]
    dots = [np.zeros_like(a) for a in args]
    for mod in filter(None, (pure, compiled)):
        _, _, cond = mod.znn_rhs(*args, *dots, np.ones(4), 1e-6, 1.0, 0, np.ones(9), 0.5, np.zeros(4))
        assert cond > 1e12


@pytest.mark.parametrize("flag,expected", [("1", "python"), ("0", None)])
def test_backend_selection(flag, expected):
    env = dict(os.environ, ZTVQP_PURE_PYTHON=flag)
    out = subprocess.run([sys.executable, "-c", "import ztvqp; print(ztvqp.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    want = expected or ("cython" if compiled is not None else "python")
    assert out == want
