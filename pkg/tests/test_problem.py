import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ztvqp.oracle import solve_static_qp
from ztvqp.problem import (AugmentedState, DimensionError, ParameterError, TvqpCoefficients,
                           assemble_dynamics, assemble_tvlme, fb_perturbed,
                           finite_difference_derivative_check, finite_difference_instance,
                           kkt_residual, refine_kkt_point, sec4_1_frozen, static_instance)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_fb_examples():
    assert fb_perturbed([0.0], [0.0], 1e-6) == pytest.approx([-1e-3])
    assert fb_perturbed([3.0], [4.0], 1e-12) == pytest.approx([2.0])
    assert np.allclose(fb_perturbed([1.0, 2.0], [0.0, 0.0], 1e-12), 0.0, atol=1e-11)


def test_fb_errors():
    with pytest.raises(DimensionError):
        fb_perturbed([1.0, 2.0], [1.0], 1e-6)
    with pytest.raises(ParameterError):
        fb_perturbed([1.0], [1.0], 0.0)


@given(finite, finite, st.floats(1e-12, 1e-6))
def test_fb_close_to_unperturbed(a, b, eps):
    exact = a + b - math.hypot(a, b)
    assert abs(fb_perturbed([a], [b], eps)[0] - exact) <= math.sqrt(eps) + 1e-12


@given(st.floats(0, 100), st.booleans())
def test_fb_complementarity_limit(x, first):
    a, b = (x, 0.0) if first else (0.0, x)
    mags = [abs(fb_perturbed([a], [b], eps)[0]) for eps in (1e-6, 1e-8, 1e-10)]
    assert mags[0] >= mags[1] >= mags[2]
    for mag, eps in zip(mags, (1e-6, 1e-8, 1e-10)):
        assert mag <= math.sqrt(eps) + 1e-15


def test_tvlme_blocks_at_zero(sec41):
    coeffs = sec41.coeff_at(0.0)
    res = assemble_tvlme(coeffs, np.zeros(7))
    assert res.e_mat.shape == (7, 7)
    assert np.allclose(res.e_mat[:2, :2], [[1.25, 0.0], [0.0, 1.0]])
    assert np.allclose(res.e_mat[2, :2], [0.0, 1.0])
    assert np.array_equal(res.epsilon, res.f)


def test_tvlme_matches_kkt_residual(sec41):
    rng = np.random.default_rng(3)
    for t in (0.2, 0.9, 1.3):
        coeffs = sec41.coeff_at(t)
        z = rng.standard_normal(7)
        res = assemble_tvlme(coeffs, z)
        assert np.allclose(res.epsilon, res.e_mat @ z + res.f, rtol=1e-14, atol=1e-14)
        assert np.allclose(res.epsilon, kkt_residual(coeffs, z), atol=1e-13)


def test_oracle_point_is_near_zero_residual(sec41):
    coeffs = sec41.coeff_at(0.0)
    z = solve_static_qp(coeffs).as_vector()
    assert np.linalg.norm(assemble_tvlme(coeffs, z, 1e-6).epsilon) <= 1e-5
    assert np.linalg.norm(kkt_residual(coeffs, z, 1e-6)) <= 1e-5


def test_kkt_residual_zero_state():
    inst = static_instance(np.eye(2), np.zeros(2), [[1.0, 0.0]], [0.0],
                           np.vstack([np.eye(2), -np.eye(2)]), [2.0, 1.0, 3.0, 0.5])
    coeffs = inst.coeff_at(0.0)
    r = kkt_residual(coeffs, np.zeros(7), 1e-6)
    assert np.all(r[:3] == 0)
    d = coeffs.d
    assert np.allclose(r[3:], d - np.sqrt(d * d + 1e-6))
    assert np.all(r[3:] < 0) and np.all(r[3:] > -1e-6)


def test_dimension_errors(sec41):
    coeffs = sec41.coeff_at(0.0)
    with pytest.raises(DimensionError):
        assemble_tvlme(coeffs, np.zeros(6))
    with pytest.raises(DimensionError):
        kkt_residual(coeffs, np.zeros(8))
    with pytest.raises(DimensionError):
        AugmentedState.from_vector(np.zeros(5), (2, 1, 4))


def test_dynamics_zero_numerators():
    # n = d - C y = 0 and lambda2 = 0 make both diagonals vanish
    inst = static_instance(np.eye(2), np.zeros(2), [[1.0, 1.0]], [0.0],
                           np.vstack([np.eye(2), -np.eye(2)]), np.zeros(4))
    dyn = assemble_dynamics(inst.coeff_at(0.0), np.zeros(7), 1e-6)
    c = inst.coeff_at(0.0).c_mat
    assert np.all(dyn.lambda1_diag == 0) and np.all(dyn.lambda2_diag == 0)
    assert np.array_equal(dyn.p_mat[3:, :2], -c)
    assert np.array_equal(dyn.p_mat[3:, 3:], np.eye(4))
    assert np.all(dyn.q_mat == 0) and np.all(dyn.rho == 0)


def test_dynamics_full_rank_at_quarter_pi(sec41):
    dyn = assemble_dynamics(sec41.coeff_at(math.pi / 4), np.zeros(7))
    assert np.all(np.isfinite(dyn.p_mat))
    assert np.linalg.svd(dyn.p_mat, compute_uv=False).min() > 1e-8


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=7, max_size=7), st.floats(0, 3))
def test_lambda_diagonals_inside_unit_disc(zs, t):
    from ztvqp.problem import get_instance

    dyn = assemble_dynamics(get_instance("sec4_1").coeff_at(t), np.array(zs))
    l1, l2 = np.diag(dyn.lambda1_diag), np.diag(dyn.lambda2_diag)
    assert np.all(l1 ** 2 + l2 ** 2 <= 1 + 1e-9)
    assert np.all(dyn.m_vec > 0)


def test_p_is_jacobian_of_residual(sec41):
    rng = np.random.default_rng(0)
    coeffs = sec41.coeff_at(0.7)
    z = rng.standard_normal(7)
    p_mat = assemble_dynamics(coeffs, z).p_mat
    h = 1e-6
    jac = np.column_stack([
        (assemble_tvlme(coeffs, z + h * e).epsilon - assemble_tvlme(coeffs, z - h * e).epsilon) / (2 * h)
        for e in np.eye(7)])
    assert np.allclose(jac, p_mat, atol=1e-7)


def test_residual_derivative_along_trajectory(sec41):
    """d eps / dt along a smooth z(t) equals P zdot + Q z + rho."""
    rng = np.random.default_rng(1)
    a0, a1 = rng.standard_normal(7), rng.standard_normal(7)
    z_of = lambda t: a0 + np.sin(t) * a1  # noqa: E731
    zd_of = lambda t: np.cos(t) * a1  # noqa: E731
    h = 1e-6
    for t in (0.3, 0.8, 1.2):
        eps_p = assemble_tvlme(sec41.coeff_at(t + h), z_of(t + h)).epsilon
        eps_m = assemble_tvlme(sec41.coeff_at(t - h), z_of(t - h)).epsilon
        fd = (eps_p - eps_m) / (2 * h)
        dyn = assemble_dynamics(sec41.coeff_at(t), z_of(t))
        model = dyn.p_mat @ zd_of(t) + dyn.q_mat @ z_of(t) + dyn.rho
        assert np.linalg.norm(fd - model) <= 1e-4 * max(1.0, np.linalg.norm(model))


def test_provider_derivatives(sec41):
    assert finite_difference_derivative_check(sec41, 1.0, 1e-5) <= 1e-6
    assert finite_difference_derivative_check(sec4_1_frozen(0.3), 1.0, 1e-5) <= 1e-12
    assert np.allclose(sec41.coeff_at(0.0).a_dot, [[2.0, 0.0]])
    with pytest.raises(ParameterError):
        finite_difference_derivative_check(sec41, 1e-6, 1e-5)


def test_finite_difference_wrapper_matches_analytic(sec41):
    def values_at(t):
        c = sec41.coeff_at(t)
        return {k: getattr(c, k) for k in ("omega", "p", "a_mat", "b", "c_mat", "d")}

    fd = finite_difference_instance((2, 1, 4), values_at)
    for t in (0.0, 0.5, 1.4):
        a, b = fd.coeff_at(t), sec41.coeff_at(t)
        tol = 1e-5 if t == 0.0 else 1e-8
        for name in ("omega_dot", "p_dot", "a_dot", "b_dot"):
            assert np.allclose(getattr(a, name), getattr(b, name), atol=tol)


def test_provider_is_deterministic(sec41):
    a, b = sec41.coeff_at(0.123), sec41.coeff_at(0.123)
    for name in TvqpCoefficients.__dataclass_fields__:
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_refine_kkt_point(sec41):
    coeffs = sec41.coeff_at(0.3)
    z = refine_kkt_point(coeffs, solve_static_qp(coeffs).as_vector(), 1e-6)
    assert np.linalg.norm(assemble_tvlme(coeffs, z, 1e-6).epsilon) <= 1e-13


def test_validate_warns():
    c = static_instance(np.eye(2), np.zeros(2), [[1.0, 1.0]], [0.0],
                        np.vstack([np.eye(2), -np.eye(2)]), np.ones(4)).coeff_at(0.0)
    c.omega = np.array([[1.0, 0.5], [0.0, 1.0]])
    with pytest.warns(RuntimeWarning, match="not symmetric"):
        issues = c.validate()
    assert issues
    c.omega = np.eye(2)
    assert c.validate() == []
    c.a_mat = np.array([[1.0, 1.0], [2.0, 2.0]])
    c.a_dot = np.zeros((2, 2))
    c.b, c.b_dot = np.zeros(2), np.zeros(2)
    with pytest.warns(RuntimeWarning, match="a_mat lacks full row rank"):
        c.validate()
