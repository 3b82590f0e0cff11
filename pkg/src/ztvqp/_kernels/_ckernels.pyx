# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; drop-in replacement for ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, exp, expm1, pow, sin, cos, INFINITY, M_PI
from libc.stdlib cimport malloc, free

cnp.import_array()

DEF C_REF11 = 0
DEF C_REF18 = 1
DEF C_REF19 = 2
DEF C_REF20 = 3
DEF C_REF38 = 4
DEF C_REF39 = 5
DEF C_PTC = 6

ZERO_THRESHOLD = 1e-12
cdef double _ZERO = 1e-12


cdef inline double _sign(double x) nogil:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


cdef inline double _spow(double x, double e) nogil:
    if x == 0:
        return 0.0
    return _sign(x) * pow(fabs(x), e)


cdef int _activation(int code, const double* eps, double* out, Py_ssize_t k, double t,
                     const double* prm) nogil:
    cdef double gamma = prm[0], alpha = prm[1], kappa = prm[2], r = prm[3], t_c = prm[4]
    cdef double zeta = prm[5], xi = prm[6], t_clamp = prm[7], h_clamp = prm[8]
    cdef Py_ssize_t i
    cdef double nrm = 0.0, mag, te, a, den
    if code == C_PTC:
        for i in range(k):
            nrm += eps[i] * eps[i]
        nrm = sqrt(nrm)
        if nrm < _ZERO:
            for i in range(k):
                out[i] = 0.0
            return 0
        te = t if t > t_clamp else t_clamp
        mag = (M_PI / (2.0 * kappa * gamma * pow(t_c, alpha))
               * (pow(nrm, 1.0 - kappa) + pow(nrm, 1.0 + kappa))
               + zeta / (gamma * pow(te, alpha - 1.0)))
        for i in range(k):
            out[i] = eps[i] * (mag / nrm)
        return 0
    if code == C_REF11 or code == C_REF20:
        for i in range(k):
            a = fabs(eps[i])
            out[i] = exp(pow(a, r)) * pow(a, 1.0 - r) * _sign(eps[i]) / r
            if code == C_REF20:
                out[i] += zeta * _sign(eps[i])
        return 0
    if code == C_REF18:
        if t < t_c:
            den = t_c - t
            if den < h_clamp:
                den = h_clamp
            for i in range(k):
                out[i] = -expm1(-eps[i]) / den
        else:
            for i in range(k):
                out[i] = eps[i]
        return 0
    if code == C_REF19:
        for i in range(k):
            out[i] = eps[i] + _spow(eps[i], r) + _spow(eps[i], 1.0 / r)
        return 0
    if code == C_REF38:
        for i in range(k):
            out[i] = eps[i] + _spow(eps[i], r)
        return 0
    if code == C_REF39:
        if t < t_c:
            den = t_c - t
            if den < h_clamp:
                den = h_clamp
            for i in range(k):
                out[i] = eps[i] / den
        else:
            for i in range(k):
                out[i] = eps[i] + _spow(eps[i], r) + xi * _sign(eps[i])
        return 0
    return -1


def activation(int code, eps, double t, params):
    cdef const double[::1] e = np.ascontiguousarray(eps, dtype=np.float64)
    cdef const double[::1] p = np.ascontiguousarray(params, dtype=np.float64)
    cdef Py_ssize_t k = e.shape[0]
    out = np.empty(k)
    cdef double[::1] o = out
    if k == 0:
        return out
    if _activation(code, &e[0], &o[0], k, t, &p[0]) != 0:
        raise ValueError(f"unknown scheme code {code}")
    return out


cdef double _lu_solve(double* a, double* b, Py_ssize_t k) nogil:
    """In-place Gaussian elimination with partial pivoting; returns pivot ratio."""
    cdef Py_ssize_t i, j, c, piv
    cdef double amax, tmp, f, dmax = 0.0, dmin = INFINITY
    for c in range(k):
        piv = c
        amax = fabs(a[c * k + c])
        for i in range(c + 1, k):
            tmp = fabs(a[i * k + c])
            if tmp > amax:
                amax = tmp
                piv = i
        if amax == 0.0:
            return INFINITY
        if amax > dmax:
            dmax = amax
        if amax < dmin:
            dmin = amax
        if piv != c:
            for j in range(k):
                tmp = a[c * k + j]
                a[c * k + j] = a[piv * k + j]
                a[piv * k + j] = tmp
            tmp = b[c]
            b[c] = b[piv]
            b[piv] = tmp
        for i in range(c + 1, k):
            f = a[i * k + c] / a[c * k + c]
            if f != 0.0:
                for j in range(c + 1, k):
                    a[i * k + j] -= f * a[c * k + j]
                b[i] -= f * b[c]
    for i in range(k - 1, -1, -1):
        tmp = b[i]
        for j in range(i + 1, k):
            tmp -= a[i * k + j] * b[j]
        b[i] = tmp / a[i * k + i]
    return dmax / dmin


cdef double _residual(const double[:, :] omega, const double[:] p, const double[:, :] a_mat,
                      const double[:] b, const double[:, :] c_mat, const double[:] d,
                      const double[:] z, double eps_fb, double* eps, double* l1, double* l2) nogil:
    """Fill ``eps`` (and Lambda diagonals); return the residual norm."""
    cdef Py_ssize_t n = omega.shape[0], m = a_mat.shape[0], l = c_mat.shape[0]
    cdef Py_ssize_t i, j
    cdef double s, nv, mv, nrm = 0.0
    for i in range(n):
        s = p[i]
        for j in range(n):
            s += omega[i, j] * z[j]
        for j in range(m):
            s += a_mat[j, i] * z[n + j]
        for j in range(l):
            s += c_mat[j, i] * z[n + m + j]
        eps[i] = s
    for i in range(m):
        s = -b[i]
        for j in range(n):
            s += a_mat[i, j] * z[j]
        eps[n + i] = s
    for i in range(l):
        nv = d[i]
        for j in range(n):
            nv -= c_mat[i, j] * z[j]
        s = z[n + m + i]
        mv = sqrt(nv * nv + s * s + eps_fb)
        eps[n + m + i] = nv + s - mv
        l1[i] = nv / mv
        l2[i] = s / mv
    for i in range(n + m + l):
        nrm += eps[i] * eps[i]
    return sqrt(nrm)


def residual_norm(omega, p, a_mat, b, c_mat, d, z, double eps_fb):
    cdef Py_ssize_t n = omega.shape[0], m = a_mat.shape[0], l = c_mat.shape[0]
    cdef Py_ssize_t k = n + m + l
    cdef double* buf = <double*> malloc((k + 2 * l + 2) * sizeof(double))
    cdef double nrm
    try:
        nrm = _residual(omega, p, a_mat, b, c_mat, d, z, eps_fb, buf, buf + k + 1, buf + k + l + 2)
    finally:
        free(buf)
    return nrm


def znn_rhs(omega, p, a_mat, b, c_mat, d, omega_dot, p_dot, a_dot, b_dot, c_dot, d_dot,
            z, double eps_fb, double gain, int code, params, double t, delta):
    """Solve ``P zdot = -Q z - rho - gain * act(eps) + delta``.

    Returns ``(zdot, ||eps||, cond_est)`` with ``cond_est`` the pivot ratio
    of the elimination (``inf`` when a zero pivot occurs).
    """
    cdef const double[:, :] om = omega
    cdef const double[:] pv = p
    cdef const double[:, :] am = a_mat
    cdef const double[:] bv = b
    cdef const double[:, :] cm = c_mat
    cdef const double[:] dv = d
    cdef const double[:, :] omd = omega_dot
    cdef const double[:] pd = p_dot
    cdef const double[:, :] ad = a_dot
    cdef const double[:] bd = b_dot
    cdef const double[:, :] cd = c_dot
    cdef const double[:] dd = d_dot
    cdef const double[:] zv = z
    cdef const double[::1] prm = np.ascontiguousarray(params, dtype=np.float64)
    cdef const double[:] dl = delta
    cdef Py_ssize_t n = om.shape[0], m = am.shape[0], l = cm.shape[0]
    cdef Py_ssize_t k = n + m + l
    cdef Py_ssize_t i, j
    cdef double nrm, cond, s
    if zv.shape[0] != k or dl.shape[0] != k:
        raise ValueError("state or noise length does not match the problem size")

    out = np.empty(k)
    cdef double[::1] o = out
    cdef double* pm = <double*> malloc((k * k + 3 * k + 2 * l + 3) * sizeof(double))
    if pm == NULL:
        raise MemoryError()
    cdef double* eps = pm + k * k
    cdef double* act = eps + k + 1
    cdef double* rhs = act + k + 1
    cdef double* l1 = rhs + k
    cdef double* l2 = l1 + l + 1
    try:
        with nogil:
            nrm = _residual(om, pv, am, bv, cm, dv, zv, eps_fb, eps, l1, l2)
            _activation(code, eps, act, k, t, &prm[0])
            for i in range(k * k):
                pm[i] = 0.0
            for i in range(n):
                for j in range(n):
                    pm[i * k + j] = om[i, j]
                for j in range(m):
                    pm[i * k + n + j] = am[j, i]
                    pm[(n + j) * k + i] = am[j, i]
                for j in range(l):
                    pm[i * k + n + m + j] = cm[j, i]
                    pm[(n + m + j) * k + i] = (l1[j] - 1.0) * cm[j, i]
            for j in range(l):
                pm[(n + m + j) * k + n + m + j] = 1.0 - l2[j]
            # rhs = -Q z - rho - gain * act + delta
            for i in range(n):
                s = pd[i]
                for j in range(n):
                    s += omd[i, j] * zv[j]
                for j in range(m):
                    s += ad[j, i] * zv[n + j]
                for j in range(l):
                    s += cd[j, i] * zv[n + m + j]
                rhs[i] = -s
            for i in range(m):
                s = -bd[i]
                for j in range(n):
                    s += ad[i, j] * zv[j]
                rhs[n + i] = -s
            for i in range(l):
                s = 0.0
                for j in range(n):
                    s += cd[i, j] * zv[j]
                rhs[n + m + i] = -((l1[i] - 1.0) * s + (1.0 - l1[i]) * dd[i])
            for i in range(k):
                rhs[i] += dl[i] - gain * act[i]
            cond = _lu_solve(pm, rhs, k)
            for i in range(k):
                o[i] = rhs[i]
    finally:
        free(pm)
    return out, nrm, cond


def dh_fk_jac(dh, theta):
    """Position and geometric positional Jacobian of a revolute DH chain."""
    cdef const double[:, :] tab = dh
    cdef const double[:] q = theta
    cdef Py_ssize_t nj = tab.shape[0]
    cdef Py_ssize_t i, r, c
    cdef double rot[9]
    cdef double nrot[9]
    cdef double link[9]
    cdef double pos[3]
    cdef double ax[3]
    cdef double a, al, dd, qq, cq, sq, ca, sa, v0, v1, v2
    pos_out = np.empty(3)
    jac = np.empty((3, nj))
    cdef double[::1] po = pos_out
    cdef double[:, ::1] jo = jac
    cdef double* axes = <double*> malloc(6 * nj * sizeof(double) + 1)
    cdef double* origins = axes + 3 * nj
    try:
        for i in range(9):
            rot[i] = 1.0 if i % 4 == 0 else 0.0
        pos[0] = pos[1] = pos[2] = 0.0
        for i in range(nj):
            a = tab[i, 0]
            al = tab[i, 1]
            dd = tab[i, 2]
            for r in range(3):
                axes[3 * i + r] = rot[3 * r + 2]
                origins[3 * i + r] = pos[r]
            qq = q[i] + tab[i, 3]
            cq = cos(qq)
            sq = sin(qq)
            ca = cos(al)
            sa = sin(al)
            link[0] = cq; link[1] = -sq * ca; link[2] = sq * sa
            link[3] = sq; link[4] = cq * ca; link[5] = -cq * sa
            link[6] = 0.0; link[7] = sa; link[8] = ca
            v0 = a * cq
            v1 = a * sq
            v2 = dd
            for r in range(3):
                pos[r] += rot[3 * r] * v0 + rot[3 * r + 1] * v1 + rot[3 * r + 2] * v2
            for r in range(3):
                for c in range(3):
                    nrot[3 * r + c] = (rot[3 * r] * link[c] + rot[3 * r + 1] * link[3 + c]
                                       + rot[3 * r + 2] * link[6 + c])
            for r in range(9):
                rot[r] = nrot[r]
        for i in range(nj):
            v0 = pos[0] - origins[3 * i]
            v1 = pos[1] - origins[3 * i + 1]
            v2 = pos[2] - origins[3 * i + 2]
            ax[0] = axes[3 * i]
            ax[1] = axes[3 * i + 1]
            ax[2] = axes[3 * i + 2]
            jo[0, i] = ax[1] * v2 - ax[2] * v1
            jo[1, i] = ax[2] * v0 - ax[0] * v2
            jo[2, i] = ax[0] * v1 - ax[1] * v0
        for r in range(3):
            po[r] = pos[r]
    finally:
        free(axes)
    return pos_out, jac
