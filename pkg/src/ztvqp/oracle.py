"""Ground truth for small frozen QPs by exhaustive active-set enumeration.

Every subset of inequality constraints is treated as active in turn; the
resulting equality-constrained KKT system is solved directly and the
candidate is kept if it is primal and dual feasible. For a convex QP
any such candidate is optimal, so the enumeration is exact up to linear
solve roundoff.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .problem import TvqpCoefficients, TvqpInstance

MAX_ENUMERATION = 16
FEAS_TOL = 1e-10
DEGENERATE_COND = 1e15


class InfeasibleError(ValueError):
    def __init__(self, msg: str, t: float | None = None):
        super().__init__(msg if t is None else f"t={t:.6g}: {msg}")
        self.t = t


class EnumerationSizeError(ValueError):
    pass


@dataclass
class OracleSolution:
    y_star: np.ndarray
    lambda1_star: np.ndarray
    lambda2_star: np.ndarray
    active_set: tuple[int, ...]
    objective: float

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.y_star, self.lambda1_star, self.lambda2_star])


def _objective(coeffs: TvqpCoefficients, y: np.ndarray) -> float:
    return float(0.5 * y @ coeffs.omega @ y + coeffs.p @ y)


def _solve_with_active(coeffs: TvqpCoefficients, active: tuple[int, ...]):
    n, m, l = coeffs.dims
    cs = coeffs.c_mat[list(active)]
    k = len(active)
    size = n + m + k
    kkt = np.zeros((size, size))
    kkt[:n, :n] = coeffs.omega
    kkt[:n, n:n + m] = coeffs.a_mat.T
    kkt[:n, n + m:] = cs.T
    kkt[n:n + m, :n] = coeffs.a_mat
    kkt[n + m:, :n] = cs
    rhs = np.concatenate([-coeffs.p, coeffs.b, coeffs.d[list(active)]])
    if np.linalg.cond(kkt) > DEGENERATE_COND:
        return None
    sol = np.linalg.solve(kkt, rhs)
    if np.linalg.norm(kkt @ sol - rhs) > 1e-9 * (1.0 + np.linalg.norm(rhs)):
        return None
    lam2 = np.zeros(l)
    lam2[list(active)] = sol[n + m:]
    return sol[:n], sol[n:n + m], lam2


def solve_static_qp(coeffs: TvqpCoefficients) -> OracleSolution:
    """Minimise the frozen QP by enumerating all active sets.

    Ties in objective are broken in favour of the smaller active set, then
    lexicographic index order, which is the enumeration order.
    """
    n, m, l = coeffs.dims
    if n + l > MAX_ENUMERATION:
        raise EnumerationSizeError(f"n + l = {n + l} exceeds the enumeration bound {MAX_ENUMERATION}")
    best = None
    for k in range(l + 1):
        for active in itertools.combinations(range(l), k):
            cand = _solve_with_active(coeffs, active)
            if cand is None:
                continue
            y, lam1, lam2 = cand
            if np.any(coeffs.c_mat @ y > coeffs.d + FEAS_TOL):
                continue
            if np.any(lam2 < -FEAS_TOL):
                continue
            obj = _objective(coeffs, y)
            if best is None or obj < best.objective - 1e-12 * max(1.0, abs(best.objective)):
                best = OracleSolution(y, lam1, lam2, active, obj)
    if best is None:
        raise InfeasibleError("no active set yields a feasible KKT point", coeffs.t)
    return best


def reference_trajectory(instance: TvqpInstance, times: Sequence[float]) -> list[OracleSolution]:
    out = []
    for t in times:
        coeffs = instance.coeff_at(float(t))
        try:
            out.append(solve_static_qp(coeffs))
        except InfeasibleError as exc:
            if exc.t is None:
                raise InfeasibleError(exc.args[0], float(t)) from exc
            raise
    return out


def settling_bound(v0: float, kappa: float, t_c: float) -> float:
    """Upper bound on the time for the residual norm to reach zero from ``v0``."""
    return 2.0 * t_c / math.pi * math.atan(v0 ** kappa)


def steady_state_bound(t_settle: float, t_c: float, kappa: float) -> float:
    """Residual norm implied by a settling time; inverse of :func:`settling_bound`."""
    if not 0 <= t_settle < t_c:
        raise ValueError(f"need 0 <= t_settle < t_c, got t_settle={t_settle}, t_c={t_c}")
    x = t_settle / t_c
    if x < 0.5:
        return math.tan(math.pi * x / 2.0) ** (1.0 / kappa)
    # tan(pi/4 + u) expanded about the midpoint, where it is exactly one
    u = math.tan(math.pi * (x - 0.5) / 2.0)
    return ((1.0 + u) / (1.0 - u)) ** (1.0 / kappa)
