"""Cyclic motion planning of a 7-joint redundant arm as a TVQP.

At the velocity level the planner solves

    min  thetadot' thetadot / 2 + mu (theta - theta0)' thetadot
    s.t. J(theta) thetadot = omega_dot(t),   d_minus <= thetadot <= d_plus

where ``d_minus``/``d_plus`` shrink the velocity box smoothly as a joint
approaches its angle limit. The ZNN state and the joint angles form one
coupled system integrated by the same explicit stepper.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dynamics import (GainProfile, NoiseModel, RhsStats, SchemeConfig, gain_eval, noise_sample,
                       rhs_from_coeffs)
from .integrator import IntegratorConfig, _snapshot, format_float, integrate, write_header
from .problem import TvqpCoefficients, TvqpInstance, refine_kkt_point

logger = logging.getLogger(__name__)

N_JOINTS = 7
LIMIT_TOL = 1e-6
JDOT_STEP = 1e-6

# Standard DH rows (a, alpha, d, theta_offset) of the default arm: a
# spherical-shoulder, spherical-wrist chain with roughly 1 m of reach.
DEFAULT_DH = np.array([
    [0.0, -math.pi / 2, 0.360, 0.0],
    [0.0, math.pi / 2, 0.0, 0.0],
    [0.0, math.pi / 2, 0.420, 0.0],
    [0.0, -math.pi / 2, 0.0, 0.0],
    [0.0, -math.pi / 2, 0.400, 0.0],
    [0.0, math.pi / 2, 0.0, 0.0],
    [0.0, 0.0, 0.126, 0.0],
])
DEFAULT_THETA_MIN = -np.deg2rad([161.0, 131.5, 172.5, 107.0, 172.5, 82.5, 172.5])
DEFAULT_THETA_MAX = np.deg2rad([161.0, 131.5, 172.5, 155.0, 172.5, 262.5, 172.5])
DEFAULT_VEL = 0.65
DEFAULT_THETA0 = np.array([0.0, 0.0, 0.0, -1.4, 0.0, 1.2, 0.0])


class JointLimitError(RuntimeError):
    pass


@dataclass(frozen=True)
class ArmModel:
    dh_rows: np.ndarray = field(default_factory=lambda: DEFAULT_DH.copy())
    theta_min: np.ndarray = field(default_factory=lambda: DEFAULT_THETA_MIN.copy())
    theta_max: np.ndarray = field(default_factory=lambda: DEFAULT_THETA_MAX.copy())
    vel_min: np.ndarray = field(default_factory=lambda: np.full(N_JOINTS, -DEFAULT_VEL))
    vel_max: np.ndarray = field(default_factory=lambda: np.full(N_JOINTS, DEFAULT_VEL))

    def __post_init__(self):
        for name in ("dh_rows", "theta_min", "theta_max", "vel_min", "vel_max"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        nj = self.dh_rows.shape[0]
        if self.dh_rows.shape != (nj, 4):
            raise ValueError(f"dh_rows must have 4 columns, got shape {self.dh_rows.shape}")
        for name in ("theta_min", "theta_max", "vel_min", "vel_max"):
            if getattr(self, name).shape != (nj,):
                raise ValueError(f"{name} must have length {nj}")
        if np.any(self.theta_min >= self.theta_max):
            raise ValueError("theta_min must be below theta_max")
        if np.any(self.vel_min >= 0) or np.any(self.vel_max <= 0):
            raise ValueError("velocity limits must straddle zero")
        if np.any(self.theta_min >= 0) or np.any(self.theta_max <= 0):
            # the smoothing thresholds are fractions of the limits
            raise ValueError("joint limits must straddle zero")

    @property
    def n_joints(self) -> int:
        return self.dh_rows.shape[0]


class PathKind(str, enum.Enum):
    CLOVER = "CLOVER"


@dataclass(frozen=True)
class TaskSpec:
    """Closed end-effector path plus the cyclic-planning parameters.

    The clover is the rose ``r = radius * cos(petals * phi)`` with
    ``phi = 2 pi t / period``, drawn in the plane spanned by ``plane_u``
    and ``plane_v`` around ``center``.
    """

    center: np.ndarray
    theta0: np.ndarray
    path_kind: PathKind = PathKind.CLOVER
    petals: int = 3
    radius: float = 0.15
    period: float = 30.0
    plane_u: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    plane_v: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    mu: float = 1.0
    kappa1: float = 0.9
    kappa2: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "path_kind", PathKind(self.path_kind))
        for name in ("center", "theta0", "plane_u", "plane_v"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        if self.center.shape != (3,):
            raise ValueError("center must be a 3-vector")
        if int(self.petals) != self.petals or self.petals < 1:
            raise ValueError(f"petals must be a positive integer, got {self.petals}")
        if self.radius < 0 or not self.period > 0:
            raise ValueError("radius must be non-negative and period positive")
        if not 0 < self.kappa1 < 1 or not 0 < self.kappa2 < 1:
            raise ValueError("kappa1 and kappa2 must lie in (0, 1)")
        if self.mu < 0:
            raise ValueError(f"mu must be non-negative, got {self.mu}")
        u, v = self.plane_u, self.plane_v
        if abs(np.linalg.norm(u) - 1) > 1e-12 or abs(np.linalg.norm(v) - 1) > 1e-12 or abs(u @ v) > 1e-12:
            raise ValueError("plane_u and plane_v must be orthonormal")


def forward_kinematics(arm: ArmModel, theta) -> np.ndarray:
    pos, _ = _kernels.dh_fk_jac(arm.dh_rows, np.asarray(theta, dtype=float))
    return np.asarray(pos)


def positional_jacobian(arm: ArmModel, theta) -> np.ndarray:
    _, jac = _kernels.dh_fk_jac(arm.dh_rows, np.asarray(theta, dtype=float))
    return np.asarray(jac)


def _petal_offset(spec: TaskSpec, t: float):
    """Planar offset of the rose and its first two time derivatives (u, v coords)."""
    w = 2.0 * math.pi / spec.period
    k = spec.petals
    phi = w * t
    r, cp, sp = spec.radius, math.cos(phi), math.sin(phi)
    ck, sk = math.cos(k * phi), math.sin(k * phi)
    pos = r * ck * np.array([cp, sp])
    d1 = r * np.array([-k * sk * cp - ck * sp, -k * sk * sp + ck * cp])
    d2 = r * np.array([-(k * k + 1) * ck * cp + 2 * k * sk * sp,
                       -(k * k + 1) * ck * sp - 2 * k * sk * cp])
    return pos, w * d1, w * w * d2


def clover_point(spec: TaskSpec, t: float):
    """Desired position and velocity on the path at time ``t``."""
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    basis = np.column_stack([spec.plane_u, spec.plane_v])
    pos, vel, _ = _petal_offset(spec, t)
    return spec.center + basis @ pos, basis @ vel


def clover_acceleration(spec: TaskSpec, t: float) -> np.ndarray:
    basis = np.column_stack([spec.plane_u, spec.plane_v])
    return basis @ _petal_offset(spec, t)[2]


def default_task(arm: ArmModel | None = None, theta0=None, **kwargs) -> TaskSpec:
    """Clover whose starting point coincides with the arm's initial end-effector."""
    arm = arm or ArmModel()
    theta0 = DEFAULT_THETA0.copy() if theta0 is None else np.asarray(theta0, dtype=float)
    radius = kwargs.get("radius", 0.15)
    plane_u = np.asarray(kwargs.get("plane_u", [0.0, 1.0, 0.0]), dtype=float)
    center = forward_kinematics(arm, theta0) - radius * plane_u
    return TaskSpec(center=center, theta0=theta0, **kwargs)


def _f_smooth(u):
    return np.sin(0.5 * np.pi * np.sin(0.5 * np.pi * u) ** 2) ** 2


def smooth_velocity_bounds(arm: ArmModel, theta, kappa1: float, kappa2: float):
    """Velocity box ``(d_minus, d_plus)`` tapered near the joint-angle limits."""
    if not 0 < kappa1 < 1 or not 0 < kappa2 < 1:
        raise ValueError("kappa1 and kappa2 must lie in (0, 1)")
    theta = np.asarray(theta, dtype=float)
    clipped = np.clip(theta, arm.theta_min, arm.theta_max)
    if np.any(clipped != theta):
        warnings.warn("joint angles outside their limits were clamped", RuntimeWarning, stacklevel=2)
    eta1 = kappa1 * arm.theta_min
    eta2 = kappa2 * arm.theta_max
    eta3 = arm.theta_min - eta1
    eta4 = arm.theta_max - eta2
    low = clipped < eta1
    high = clipped > eta2
    d_minus = np.where(low, arm.vel_min * (1.0 - _f_smooth((clipped - eta1) / eta3)), arm.vel_min)
    d_plus = np.where(high, arm.vel_max * (1.0 - _f_smooth((clipped - eta2) / eta4)), arm.vel_max)
    return d_minus, d_plus


class JointState:
    """Mutable holder for the arm's current joint angles and velocities."""

    def __init__(self, theta, thetadot=None):
        self.theta = np.asarray(theta, dtype=float).copy()
        self.thetadot = np.zeros_like(self.theta) if thetadot is None else np.asarray(thetadot, float)

    def __call__(self):
        return self.theta, self.thetadot


def build_cyclic_tvqp(arm: ArmModel, spec: TaskSpec, current_theta_source) -> TvqpInstance:
    """TVQP re-posed at whatever joint state ``current_theta_source()`` returns.

    The source returns ``theta`` or ``(theta, thetadot)``; the velocity is
    needed for the derivative of the Jacobian and of ``p``. The velocity
    bounds are treated as constant within the dynamics (``d_dot = 0``).
    """
    nj = arm.n_joints
    c_mat = np.vstack([np.eye(nj), -np.eye(nj)])
    zeros_c = np.zeros_like(c_mat)
    eye = np.eye(nj)
    zeros_n = np.zeros((nj, nj))
    zeros_l = np.zeros(2 * nj)
    theta0 = spec.theta0
    basis = np.column_stack([spec.plane_u, spec.plane_v])
    # inside the soft band the velocity box is the raw one
    eta_lo, eta_hi = spec.kappa1 * arm.theta_min, spec.kappa2 * arm.theta_max
    d_free = np.concatenate([arm.vel_max, -arm.vel_min])

    def coeff_at(t: float) -> TvqpCoefficients:
        src = current_theta_source()
        if isinstance(src, tuple):
            theta, thetadot = src
        else:
            theta, thetadot = src, np.zeros(nj)
        _, jac = _kernels.dh_fk_jac(arm.dh_rows, theta)
        speed = math.sqrt(float(thetadot @ thetadot))
        if speed > 0:
            s = JDOT_STEP / speed
            _, jp = _kernels.dh_fk_jac(arm.dh_rows, theta + s * thetadot)
            _, jm = _kernels.dh_fk_jac(arm.dh_rows, theta - s * thetadot)
            jdot = (jp - jm) / (2.0 * s)
        else:
            jdot = np.zeros_like(jac)
        _, vel, acc = _petal_offset(spec, t)
        if np.all(theta >= eta_lo) and np.all(theta <= eta_hi):
            d = d_free
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                d_minus, d_plus = smooth_velocity_bounds(arm, theta, spec.kappa1, spec.kappa2)
            d = np.concatenate([d_plus, -d_minus])
        return TvqpCoefficients(
            omega=eye, p=spec.mu * (theta - theta0), a_mat=jac, b=basis @ vel, c_mat=c_mat, d=d,
            omega_dot=zeros_n, p_dot=spec.mu * thetadot, a_dot=jdot, b_dot=basis @ acc,
            c_dot=zeros_c, d_dot=zeros_l, t=t)

    return TvqpInstance((nj, 3, 2 * nj), coeff_at, "robot_clover")


def initial_state(arm: ArmModel, spec: TaskSpec, t: float, eps_fb: float) -> np.ndarray:
    """Near-optimal neural state at ``t`` with the arm at ``theta0``.

    The minimum-objective velocity under the equality constraint alone is
    computed directly, then the full perturbed residual is Newton-polished.
    """
    nj = arm.n_joints
    holder = JointState(spec.theta0)
    coeffs = build_cyclic_tvqp(arm, spec, holder).coeff_at(t)
    kkt = np.block([[np.eye(nj), coeffs.a_mat.T], [coeffs.a_mat, np.zeros((3, 3))]])
    sol = np.linalg.solve(kkt, np.concatenate([-coeffs.p, coeffs.b]))
    z = np.concatenate([sol, np.zeros(2 * nj)])
    holder.thetadot = z[:nj]
    coeffs = build_cyclic_tvqp(arm, spec, holder).coeff_at(t)
    return refine_kkt_point(coeffs, z, eps_fb)


@dataclass
class MotionRecord:
    times: np.ndarray
    joint_angles: np.ndarray
    joint_velocities: np.ndarray
    end_effector_positions: np.ndarray
    tracking_errors: np.ndarray
    residual_norms: np.ndarray
    noise_seed: int | None = None
    config: dict = field(default_factory=dict)
    solve_warnings: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def max_tracking_error(self, after: float = 0.0) -> float:
        mask = self.times >= after
        return float(np.max(self.tracking_errors[mask])) if np.any(mask) else float("nan")

    def joint_return(self) -> float:
        return float(np.linalg.norm(self.joint_angles[-1] - self.joint_angles[0]))


def simulate_motion(arm: ArmModel, spec: TaskSpec, scheme: SchemeConfig,
                    profile: GainProfile | None = None, noise: NoiseModel | None = None,
                    icfg: IntegratorConfig | None = None, *, allow_partial: bool = False) -> MotionRecord:
    """Closed-loop tracking run; the joint angles integrate the solver's velocity.

    The horizon must cover one full period unless ``allow_partial`` is set.
    """
    icfg = icfg or IntegratorConfig(t_end=spec.period)
    if spec.period > icfg.t_end + 1e-12 and not allow_partial:
        raise ValueError(f"t_end={icfg.t_end} is shorter than the path period {spec.period}")
    noise = noise or NoiseModel.none()
    scheme = scheme.with_clamp(icfg.h)
    profile = profile or scheme.default_profile()
    nj = arm.n_joints
    holder = JointState(spec.theta0)
    instance = build_cyclic_tvqp(arm, spec, holder)
    k = instance.size
    z0 = initial_state(arm, spec, icfg.t0, scheme.eps_fb)
    x0 = np.concatenate([z0, spec.theta0])
    stats = RhsStats()

    def field_fn(t, x, delta):
        z = x[:k]
        holder.theta = x[k:]
        holder.thetadot = z[:nj]
        zdot, nrm = rhs_from_coeffs(instance.coeff_at(t), z, t, scheme, gain_eval(profile, t),
                                    delta, stats)
        return np.concatenate([zdot, z[:nj]]), nrm

    if noise.is_zero():
        zeros = np.zeros(k)
        delta_fn = lambda t, j: zeros  # noqa: E731
    else:
        delta_fn = lambda t, j: noise_sample(noise, t, k, j)  # noqa: E731

    rows = {"t": [], "theta": [], "thetadot": [], "ee": [], "err": [], "res": []}

    def observe(j, t, x, res):
        theta = x[k:]
        ee = forward_kinematics(arm, theta)
        target, _ = clover_point(spec, t)
        rows["t"].append(t)
        rows["theta"].append(theta.copy())
        rows["thetadot"].append(x[:nj].copy())
        rows["ee"].append(ee)
        rows["err"].append(float(np.linalg.norm(ee - target)))
        rows["res"].append(res)

    def check(t, x):
        theta = x[k:]
        over = np.maximum(arm.theta_min - theta, theta - arm.theta_max)
        if np.any(over > LIMIT_TOL):
            j = int(np.argmax(over))
            return f"t={t:.6g}: joint {j + 1} left its limits by {over[j]:.3g} rad"
        return None

    error = integrate(field_fn, x0, icfg, delta_fn, observe, check)
    if error:
        logger.error("robot run aborted: %s", error)
    n_rec = len(rows["t"])
    return MotionRecord(
        times=np.array(rows["t"]),
        joint_angles=np.array(rows["theta"]).reshape(n_rec, nj),
        joint_velocities=np.array(rows["thetadot"]).reshape(n_rec, nj),
        end_effector_positions=np.array(rows["ee"]).reshape(n_rec, 3),
        tracking_errors=np.array(rows["err"]),
        residual_norms=np.array(rows["res"]),
        noise_seed=noise.seed,
        solve_warnings=stats.fallbacks,
        error=error,
        config=_snapshot(instance="robot_clover", arm=_arm_dict(arm), task=_task_dict(spec),
                         scheme=scheme, profile=profile, noise=noise, integrator=icfg),
    )


def _arm_dict(arm: ArmModel) -> dict:
    return {k: np.asarray(getattr(arm, k)).tolist()
            for k in ("dh_rows", "theta_min", "theta_max", "vel_min", "vel_max")}


def _task_dict(spec: TaskSpec) -> dict:
    out = {}
    for k in spec.__dataclass_fields__:
        v = getattr(spec, k)
        out[k] = v.tolist() if isinstance(v, np.ndarray) else (v.value if isinstance(v, enum.Enum) else v)
    return out


def write_motion_csv(record: MotionRecord, path, config: dict | None = None) -> None:
    nj = record.joint_angles.shape[1]
    header = (["t"] + [f"theta_{i + 1}" for i in range(nj)] + [f"thetadot_{i + 1}" for i in range(nj)]
              + ["ee_x", "ee_y", "ee_z", "tracking_error", "residual_norm"])
    with open(path, "w", newline="") as fh:
        write_header(fh, config if config is not None else record.config, record.noise_seed)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, t in enumerate(record.times):
            vals = [t, *record.joint_angles[i], *record.joint_velocities[i],
                    *record.end_effector_positions[i], record.tracking_errors[i],
                    record.residual_norms[i]]
            writer.writerow([format_float(v) for v in vals])
