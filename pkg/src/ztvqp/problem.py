"""Time-variant QP instances and their perturbed Fischer-Burmeister KKT form.

A TVQP reads::

    min  y' Omega(t) y / 2 + p(t)' y
    s.t. A(t) y = b(t)
         C(t) y <= d(t)

Stacking ``z = [y, lambda1, lambda2]`` turns the KKT conditions into the
residual ``eps(z, t) = E(t) z + f(z, t)``. Its Jacobian with respect to
``z`` is ``P`` and its explicit time derivative is ``Q z + rho``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_EPS_FB = 1e-6
FD_FALLBACK_STEP = 1e-6

_COEFF_NAMES = ("omega", "p", "a_mat", "b", "c_mat", "d")
_DOT_NAMES = {name: name.replace("_mat", "") + "_dot" for name in _COEFF_NAMES}


class DimensionError(ValueError):
    """Array shapes are inconsistent with the declared problem sizes."""


class ParameterError(ValueError):
    """A scalar parameter lies outside its admissible range."""


class SingularityError(ArithmeticError):
    """A quantity needed as a divisor vanished."""


@dataclass
class TvqpCoefficients:
    """Coefficient snapshot of a TVQP at time ``t`` and its time derivatives."""

    omega: np.ndarray
    p: np.ndarray
    a_mat: np.ndarray
    b: np.ndarray
    c_mat: np.ndarray
    d: np.ndarray
    omega_dot: np.ndarray
    p_dot: np.ndarray
    a_dot: np.ndarray
    b_dot: np.ndarray
    c_dot: np.ndarray
    d_dot: np.ndarray
    t: float = 0.0

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.omega.shape[0], self.a_mat.shape[0], self.c_mat.shape[0]

    def check_shapes(self) -> None:
        n, m, l = self.dims
        expected = {
            "omega": (n, n), "p": (n,), "a_mat": (m, n), "b": (m,),
            "c_mat": (l, n), "d": (l,),
        }
        for name, shape in expected.items():
            for attr in (name, _DOT_NAMES[name]):
                got = np.shape(getattr(self, attr))
                if got != shape:
                    raise DimensionError(f"{attr} has shape {got}, expected {shape}")

    def validate(self, sym_tol: float = 1e-12, eig_tol: float = 1e-10,
                 rank_tol: float = 1e-10) -> list[str]:
        """Check the structural assumptions; return warnings instead of raising.

        Rank deficiency of ``A`` or ``C`` can occur at isolated instants, so
        only shape errors are fatal.
        """
        self.check_shapes()
        issues = []
        if np.max(np.abs(self.omega - self.omega.T), initial=0.0) > sym_tol:
            issues.append("omega is not symmetric")
        elif np.linalg.eigvalsh(self.omega).min() < -eig_tol:
            issues.append("omega is not positive semi-definite")
        for name in ("a_mat", "c_mat"):
            mat = getattr(self, name)
            if name == "c_mat" and mat.shape[0] > mat.shape[1]:
                continue  # stacked two-sided bounds never have full row rank
            if mat.shape[0] and (mat.shape[0] > mat.shape[1]
                                 or np.linalg.svd(mat, compute_uv=False).min() <= rank_tol):
                issues.append(f"{name} lacks full row rank")
        for msg in issues:
            warnings.warn(f"t={self.t:g}: {msg}", RuntimeWarning, stacklevel=2)
        return issues


@dataclass
class TvqpInstance:
    """A TVQP given by a deterministic map from time to coefficients."""

    dims: tuple[int, int, int]
    coeff_at: Callable[[float], TvqpCoefficients]
    label: str = "custom"

    @property
    def size(self) -> int:
        return sum(self.dims)


@dataclass
class AugmentedState:
    y: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    t: float = 0.0

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.y, self.lambda1, self.lambda2])

    @classmethod
    def from_vector(cls, z, dims, t: float = 0.0) -> "AugmentedState":
        n, m, l = dims
        z = np.asarray(z, dtype=float)
        if z.shape != (n + m + l,):
            raise DimensionError(f"state has shape {z.shape}, expected {(n + m + l,)}")
        return cls(z[:n].copy(), z[n:n + m].copy(), z[n + m:].copy(), t)

    @classmethod
    def zeros(cls, dims, t: float = 0.0) -> "AugmentedState":
        return cls.from_vector(np.zeros(sum(dims)), dims, t)


@dataclass
class ResidualSystem:
    e_mat: np.ndarray
    f: np.ndarray
    epsilon: np.ndarray


@dataclass
class DynamicsMatrices:
    p_mat: np.ndarray
    q_mat: np.ndarray
    rho: np.ndarray
    lambda1_diag: np.ndarray
    lambda2_diag: np.ndarray
    m_vec: np.ndarray
    n_vec: np.ndarray


def fb_perturbed(a, b, eps: float) -> np.ndarray:
    """Perturbed Fischer-Burmeister function ``a + b - sqrt(a^2 + b^2 + eps)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape} vs {b.shape}")
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    return a + b - np.sqrt(a * a + b * b + eps)


def _state_vector(coeffs: TvqpCoefficients, z) -> np.ndarray:
    vec = z.as_vector() if isinstance(z, AugmentedState) else np.asarray(z, dtype=float)
    if vec.shape != (sum(coeffs.dims),):
        raise DimensionError(f"state has shape {vec.shape}, expected {(sum(coeffs.dims),)}")
    return vec


def _check_eps(eps: float) -> None:
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")


def assemble_tvlme(coeffs: TvqpCoefficients, z, eps: float = DEFAULT_EPS_FB) -> ResidualSystem:
    _check_eps(eps)
    vec = _state_vector(coeffs, z)
    n, m, l = coeffs.dims
    y, lam2 = vec[:n], vec[n + m:]
    n_vec = coeffs.d - coeffs.c_mat @ y
    m_vec = np.sqrt(n_vec * n_vec + lam2 * lam2 + eps)

    e_mat = np.zeros((n + m + l, n + m + l))
    e_mat[:n, :n] = coeffs.omega
    e_mat[:n, n:n + m] = coeffs.a_mat.T
    e_mat[:n, n + m:] = coeffs.c_mat.T
    e_mat[n:n + m, :n] = coeffs.a_mat
    e_mat[n + m:, :n] = -coeffs.c_mat
    e_mat[n + m:, n + m:] = np.eye(l)
    f = np.concatenate([coeffs.p, -coeffs.b, coeffs.d - m_vec])
    return ResidualSystem(e_mat, f, e_mat @ vec + f)


def assemble_dynamics(coeffs: TvqpCoefficients, z, eps: float = DEFAULT_EPS_FB) -> DynamicsMatrices:
    _check_eps(eps)
    vec = _state_vector(coeffs, z)
    n, m, l = coeffs.dims
    y, lam2 = vec[:n], vec[n + m:]
    n_vec = coeffs.d - coeffs.c_mat @ y
    m_vec = np.sqrt(n_vec * n_vec + lam2 * lam2 + eps)
    if l and m_vec.min() < 1e-300:
        raise SingularityError("m(t) vanished")
    lam1_d = n_vec / m_vec
    lam2_d = lam2 / m_vec
    k = n + m + l

    p_mat = np.zeros((k, k))
    p_mat[:n, :n] = coeffs.omega
    p_mat[:n, n:n + m] = coeffs.a_mat.T
    p_mat[:n, n + m:] = coeffs.c_mat.T
    p_mat[n:n + m, :n] = coeffs.a_mat
    p_mat[n + m:, :n] = (lam1_d - 1.0)[:, None] * coeffs.c_mat
    p_mat[n + m:, n + m:] = np.diag(1.0 - lam2_d)

    q_mat = np.zeros((k, k))
    q_mat[:n, :n] = coeffs.omega_dot
    q_mat[:n, n:n + m] = coeffs.a_dot.T
    q_mat[:n, n + m:] = coeffs.c_dot.T
    q_mat[n:n + m, :n] = coeffs.a_dot
    q_mat[n + m:, :n] = (lam1_d - 1.0)[:, None] * coeffs.c_dot

    rho = np.concatenate([coeffs.p_dot, -coeffs.b_dot, (1.0 - lam1_d) * coeffs.d_dot])
    return DynamicsMatrices(p_mat, q_mat, rho, np.diag(lam1_d), np.diag(lam2_d), m_vec, n_vec)


def kkt_residual(coeffs: TvqpCoefficients, z, eps: float = DEFAULT_EPS_FB) -> np.ndarray:
    """Stacked stationarity, equality and complementarity residuals."""
    _check_eps(eps)
    vec = _state_vector(coeffs, z)
    n, m, _ = coeffs.dims
    y, lam1, lam2 = vec[:n], vec[n:n + m], vec[n + m:]
    stationarity = coeffs.omega @ y + coeffs.p + coeffs.a_mat.T @ lam1 + coeffs.c_mat.T @ lam2
    equality = coeffs.a_mat @ y - coeffs.b
    compl = fb_perturbed(coeffs.d - coeffs.c_mat @ y, lam2, eps)
    return np.concatenate([stationarity, equality, compl])


def refine_kkt_point(coeffs: TvqpCoefficients, z, eps: float = DEFAULT_EPS_FB,
                     tol: float = 1e-14, max_iter: int = 20) -> np.ndarray:
    """Newton-polish ``z`` onto the zero set of the perturbed residual.

    ``P`` is the exact Jacobian of the residual in ``z``, so a good starting
    point (e.g. an exact KKT point) converges quadratically.
    """
    vec = _state_vector(coeffs, z).copy()
    for _ in range(max_iter):
        res = assemble_tvlme(coeffs, vec, eps).epsilon
        if np.linalg.norm(res) <= tol:
            break
        vec -= np.linalg.solve(assemble_dynamics(coeffs, vec, eps).p_mat, res)
    return vec


def finite_difference_derivative_check(instance: TvqpInstance, t: float, h: float = 1e-5) -> float:
    """Largest gap between supplied derivatives and central differences."""
    if not h > 0 or not t - h > 0:
        raise ParameterError(f"need h > 0 and t - h > 0, got t={t}, h={h}")
    mid = instance.coeff_at(t)
    lo = instance.coeff_at(t - h)
    hi = instance.coeff_at(t + h)
    err = 0.0
    for name in _COEFF_NAMES:
        fd = (getattr(hi, name) - getattr(lo, name)) / (2.0 * h)
        diff = np.abs(fd - getattr(mid, _DOT_NAMES[name]))
        if diff.size:
            err = max(err, float(diff.max()))
    return err


def finite_difference_instance(dims, values_at: Callable[[float], dict], label: str = "fd",
                               h: float = FD_FALLBACK_STEP) -> TvqpInstance:
    """Wrap a values-only provider, filling derivatives by central differences.

    ``values_at(t)`` returns a mapping with keys omega, p, a_mat, b, c_mat, d.
    Near ``t = 0`` a forward difference is used so ``t - h`` is never queried.
    """

    def coeff_at(t: float) -> TvqpCoefficients:
        mid = values_at(t)
        if t - h >= 0:
            lo, hi, span = values_at(t - h), values_at(t + h), 2.0 * h
        else:
            lo, hi, span = mid, values_at(t + h), h
        dots = {_DOT_NAMES[k]: (np.asarray(hi[k], float) - np.asarray(lo[k], float)) / span
                for k in _COEFF_NAMES}
        vals = {k: np.asarray(mid[k], float) for k in _COEFF_NAMES}
        return TvqpCoefficients(**vals, **dots, t=t)

    return TvqpInstance(tuple(dims), coeff_at, label)


def _box(n: int) -> np.ndarray:
    return np.vstack([np.eye(n), -np.eye(n)])


def sec4_1_instance() -> TvqpInstance:
    """Two-variable benchmark with a rotating equality and a unit box.

    At ``t = pi/2`` the equality row ``[sin 2t, cos 2t]`` equals ``[0, -1]``
    with ``b = -1``, so the equality coincides with the face ``y2 <= 1``.
    Constraint qualification fails there: the multipliers diverge and the
    optimiser jumps. Runs that cross this instant see a residual spike.
    """
    c_mat = _box(2)
    d = np.ones(4)
    zeros_c = np.zeros((4, 2))
    zeros_d = np.zeros(4)

    def coeff_at(t: float) -> TvqpCoefficients:
        s1, c1 = math.sin(t), math.cos(t)
        s2, c2 = math.sin(2 * t), math.cos(2 * t)
        return TvqpCoefficients(
            omega=np.array([[c1 / 4 + 1, s1 / 4], [s1 / 4, s1 / 4 + 1]]),
            p=np.array([c2, s2]),
            a_mat=np.array([[s2, c2]]),
            b=np.array([math.sin(3 * t)]),
            c_mat=c_mat.copy(),
            d=d.copy(),
            omega_dot=np.array([[-s1 / 4, c1 / 4], [c1 / 4, c1 / 4]]),
            p_dot=np.array([-2 * s2, 2 * c2]),
            a_dot=np.array([[2 * c2, -2 * s2]]),
            b_dot=np.array([3 * math.cos(3 * t)]),
            c_dot=zeros_c.copy(),
            d_dot=zeros_d.copy(),
            t=t,
        )

    return TvqpInstance((2, 1, 4), coeff_at, "sec4_1")


def static_instance(omega, p, a_mat, b, c_mat, d, label: str = "static") -> TvqpInstance:
    """Time-invariant instance; every derivative is zero."""
    vals = {
        "omega": np.atleast_2d(np.asarray(omega, float)),
        "p": np.atleast_1d(np.asarray(p, float)),
        "a_mat": np.atleast_2d(np.asarray(a_mat, float)),
        "b": np.atleast_1d(np.asarray(b, float)),
        "c_mat": np.atleast_2d(np.asarray(c_mat, float)),
        "d": np.atleast_1d(np.asarray(d, float)),
    }
    dims = (vals["omega"].shape[0], vals["a_mat"].shape[0], vals["c_mat"].shape[0])

    def coeff_at(t: float) -> TvqpCoefficients:
        fields = {k: v.copy() for k, v in vals.items()}
        dots = {_DOT_NAMES[k]: np.zeros_like(v) for k, v in vals.items()}
        return TvqpCoefficients(**fields, **dots, t=t)

    coeffs = coeff_at(0.0)
    coeffs.check_shapes()
    return TvqpInstance(dims, coeff_at, label)


def sec4_1_frozen(t_freeze: float = 0.0) -> TvqpInstance:
    """The benchmark instance with its coefficients frozen at ``t_freeze``."""
    c = sec4_1_instance().coeff_at(t_freeze)
    return static_instance(c.omega, c.p, c.a_mat, c.b, c.c_mat, c.d,
                           label=f"sec4_1_frozen@{t_freeze:g}")


BUILTIN_INSTANCES: dict[str, Callable[[], TvqpInstance]] = {
    "sec4_1": sec4_1_instance,
    "sec4_1_frozen": sec4_1_frozen,
}


def get_instance(name: str) -> TvqpInstance:
    try:
        return BUILTIN_INSTANCES[name]()
    except KeyError:
        raise KeyError(f"unknown instance {name!r}; known: {sorted(BUILTIN_INSTANCES)}") from None
