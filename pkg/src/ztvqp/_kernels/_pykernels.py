"""Pure NumPy implementation of the hot kernels.

Signatures mirror the compiled ``_ckernels`` module exactly; see
``ztvqp._kernels`` for the selection logic.

``params`` is the packed scheme parameter vector
``[gamma, alpha, kappa, r, t_c, zeta, xi, t_clamp, h_clamp]``.
"""

import math
import warnings

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

ZERO_THRESHOLD = 1e-12

REF11, REF18, REF19, REF20, REF38, REF39, PTC_NT_FOZNN = range(7)


def _spow(x, e):
    """sign(x) * |x|**e with sign(0) = 0."""
    return np.sign(x) * np.abs(x) ** e


def activation(code, eps, t, params):
    eps = np.asarray(eps, dtype=float)
    gamma, alpha, kappa, r, t_c, zeta, xi, t_clamp, h_clamp = params
    if code == PTC_NT_FOZNN:
        nrm = math.sqrt(float(eps @ eps))
        if nrm < ZERO_THRESHOLD:
            return np.zeros_like(eps)
        te = max(t, t_clamp)
        mag = (math.pi / (2.0 * kappa * gamma * t_c ** alpha)
               * (nrm ** (1.0 - kappa) + nrm ** (1.0 + kappa))
               + zeta / (gamma * te ** (alpha - 1.0)))
        return eps * (mag / nrm)
    if code == REF11 or code == REF20:
        a = np.abs(eps)
        out = np.exp(a ** r) * a ** (1.0 - r) * np.sign(eps) / r
        if code == REF20:
            out = out + zeta * np.sign(eps)
        return out
    if code == REF18:
        if t < t_c:
            return -np.expm1(-eps) / max(t_c - t, h_clamp)
        return eps.copy()
    if code == REF19:
        return eps + _spow(eps, r) + _spow(eps, 1.0 / r)
    if code == REF38:
        return eps + _spow(eps, r)
    if code == REF39:
        if t < t_c:
            return eps / max(t_c - t, h_clamp)
        return eps + _spow(eps, r) + xi * np.sign(eps)
    raise ValueError(f"unknown scheme code {code}")


def znn_rhs(omega, p, a_mat, b, c_mat, d, omega_dot, p_dot, a_dot, b_dot, c_dot, d_dot,
            z, eps_fb, gain, code, params, t, delta):
    """Solve ``P zdot = -Q z - rho - gain * act(eps) + delta``.

    Returns ``(zdot, ||eps||, cond_est)``; ``cond_est`` is the ratio of the
    largest to smallest pivot of the LU factorisation (``inf`` if singular),
    in which case ``zdot`` is not meaningful.
    """
    n = omega.shape[0]
    m = a_mat.shape[0]
    l = c_mat.shape[0]
    k = n + m + l
    y = z[:n]
    lam1 = z[n:n + m]
    lam2 = z[n + m:]
    nv = d - c_mat @ y
    mv = np.sqrt(nv * nv + lam2 * lam2 + eps_fb)
    l1 = nv / mv
    l2 = lam2 / mv

    eps = np.concatenate([
        omega @ y + a_mat.T @ lam1 + c_mat.T @ lam2 + p,
        a_mat @ y - b,
        nv + lam2 - mv,
    ])
    nrm = math.sqrt(float(eps @ eps))

    pm = np.zeros((k, k))
    pm[:n, :n] = omega
    pm[:n, n:n + m] = a_mat.T
    pm[:n, n + m:] = c_mat.T
    pm[n:n + m, :n] = a_mat
    pm[n + m:, :n] = (l1 - 1.0)[:, None] * c_mat
    pm[range(n + m, k), range(n + m, k)] = 1.0 - l2

    qz = np.concatenate([
        omega_dot @ y + a_dot.T @ lam1 + c_dot.T @ lam2,
        a_dot @ y,
        (l1 - 1.0) * (c_dot @ y),
    ])
    rho = np.concatenate([p_dot, -b_dot, (1.0 - l1) * d_dot])
    rhs = -qz - rho - gain * activation(code, eps, t, params) + delta

    with warnings.catch_warnings():
        # a zero pivot is reported through the returned condition estimate
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(pm, check_finite=False)
    diag = np.abs(np.diag(lu))
    dmin = diag.min()
    if not dmin > 0:
        return np.zeros(k), nrm, math.inf
    cond = float(diag.max() / dmin)
    return lu_solve((lu, piv), rhs, check_finite=False), nrm, cond


def residual_norm(omega, p, a_mat, b, c_mat, d, z, eps_fb):
    n = omega.shape[0]
    m = a_mat.shape[0]
    y = z[:n]
    lam1 = z[n:n + m]
    lam2 = z[n + m:]
    nv = d - c_mat @ y
    mv = np.sqrt(nv * nv + lam2 * lam2 + eps_fb)
    eps = np.concatenate([
        omega @ y + a_mat.T @ lam1 + c_mat.T @ lam2 + p,
        a_mat @ y - b,
        nv + lam2 - mv,
    ])
    return math.sqrt(float(eps @ eps))


def dh_fk_jac(dh, theta):
    """Position and geometric positional Jacobian of a revolute DH chain.

    ``dh`` rows are ``(a, alpha, d, theta_offset)`` in standard convention.
    """
    nj = dh.shape[0]
    rot = np.eye(3)
    pos = np.zeros(3)
    axes = np.empty((nj, 3))
    origins = np.empty((nj, 3))
    for i in range(nj):
        a, al, dd, off = dh[i]
        axes[i] = rot[:, 2]
        origins[i] = pos
        q = theta[i] + off
        cq, sq = math.cos(q), math.sin(q)
        ca, sa = math.cos(al), math.sin(al)
        link = np.array([[cq, -sq * ca, sq * sa],
                         [sq, cq * ca, -cq * sa],
                         [0.0, sa, ca]])
        pos = pos + rot @ np.array([a * cq, a * sq, dd])
        rot = rot @ link
    jac = np.cross(axes, pos - origins).T
    return pos, jac
