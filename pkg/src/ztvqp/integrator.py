"""Fixed-step explicit integration of the neural dynamics."""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .dynamics import (GainProfile, NoiseModel, RhsStats, SchemeConfig, SolveError, gain_eval,
                       noise_sample, rhs_from_coeffs)
from .oracle import solve_static_qp
from .problem import AugmentedState, DimensionError, TvqpInstance, refine_kkt_point

MAX_STEPS = 1e8


class Method(str, enum.Enum):
    EULER = "EULER"
    RK4 = "RK4"


@dataclass(frozen=True)
class IntegratorConfig:
    method: Method = Method.RK4
    h: float = 1e-4
    t0: float = 1e-4
    t_end: float = 2.0
    record_stride: int = 10

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not self.h > 0:
            raise ValueError(f"step size must be positive, got {self.h}")
        if not 0 <= self.t0 < self.t_end:
            raise ValueError(f"need 0 <= t0 < t_end, got t0={self.t0}, t_end={self.t_end}")
        if (self.t_end - self.t0) / self.h > MAX_STEPS:
            raise ValueError("too many integration steps")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError(f"record_stride must be a positive integer, got {self.record_stride}")

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t0) / self.h))

    def time(self, step: int) -> float:
        return self.t0 + step * self.h


@dataclass
class RunRecord:
    times: np.ndarray
    states: np.ndarray
    residual_norms: np.ndarray
    dims: tuple[int, int, int]
    noise_seed: int | None = None
    config: dict = field(default_factory=dict)
    solve_warnings: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def augmented_states(self) -> list[AugmentedState]:
        return [AugmentedState.from_vector(z, self.dims, t) for t, z in zip(self.times, self.states)]

    def state_at(self, t: float) -> np.ndarray:
        """Recorded state nearest to ``t``."""
        return self.states[int(np.argmin(np.abs(self.times - t)))]


def integrate(field_fn: Callable, x0: np.ndarray, icfg: IntegratorConfig,
              delta_fn: Callable[[float, int], np.ndarray],
              observe: Callable[[int, float, np.ndarray, float], None],
              check: Callable[[float, np.ndarray], str | None] | None = None) -> str | None:
    """Advance ``x' = field_fn(t, x, delta)`` with a fixed explicit step.

    ``field_fn`` returns ``(xdot, residual)`` where the residual is the
    scalar recorded alongside the state. ``delta`` is sampled once per step
    and shared by all stages. ``observe(step, t, x, residual)`` is called on
    every ``record_stride``-th step including the first and the last.
    ``check(t, x)``, if given, runs after every step and may return a
    message to abort the run. Returns an error message if the run aborted, else ``None``.
    """
    h = icfg.h
    stride = icfg.record_stride
    nsteps = icfg.n_steps
    rk4 = icfg.method is Method.RK4
    x = np.array(x0, dtype=float)
    for j in range(nsteps + 1):
        t = icfg.time(j)
        delta = delta_fn(t, j)
        try:
            k1, res = field_fn(t, x, delta)
            if j % stride == 0 or j == nsteps:
                observe(j, t, x, res)
            if j == nsteps:
                break
            if rk4:
                k2, _ = field_fn(t + 0.5 * h, x + (0.5 * h) * k1, delta)
                k3, _ = field_fn(t + 0.5 * h, x + (0.5 * h) * k2, delta)
                k4, _ = field_fn(t + h, x + h * k3, delta)
                x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            else:
                x = x + h * k1
        except SolveError as exc:
            return str(exc)
        if not np.all(np.isfinite(x)):
            return f"t={t + h:.6g}: state became non-finite"
        if check is not None:
            msg = check(t + h, x)
            if msg:
                return msg
    return None


def _snapshot(**parts) -> dict:
    out = {}
    for key, val in parts.items():
        if val is None:
            out[key] = None
        elif hasattr(val, "__dataclass_fields__"):
            out[key] = {k: (v.value if isinstance(v, enum.Enum) else v) for k, v in asdict(val).items()}
        else:
            out[key] = val
    return out


def simulate(instance: TvqpInstance, z0, scheme: SchemeConfig, profile: GainProfile | None = None,
             noise: NoiseModel | None = None, icfg: IntegratorConfig | None = None) -> RunRecord:
    icfg = icfg or IntegratorConfig()
    noise = noise or NoiseModel.none()
    scheme = scheme.with_clamp(icfg.h)
    profile = profile or scheme.default_profile()
    k = instance.size
    zvec = z0.as_vector() if isinstance(z0, AugmentedState) else np.asarray(z0, dtype=float)
    if zvec.shape != (k,):
        raise DimensionError(f"initial state has shape {zvec.shape}, expected {(k,)}")

    stats = RhsStats()
    coeff_at = instance.coeff_at

    def field_fn(t, z, delta):
        return rhs_from_coeffs(coeff_at(t), z, t, scheme, gain_eval(profile, t), delta, stats)

    if noise.is_zero():
        zeros = np.zeros(k)
        delta_fn = lambda t, j: zeros  # noqa: E731
    else:
        delta_fn = lambda t, j: noise_sample(noise, t, k, j)  # noqa: E731

    times, states, residuals = [], [], []

    def observe(j, t, z, res):
        times.append(t)
        states.append(z.copy())
        residuals.append(res)

    error = integrate(field_fn, zvec, icfg, delta_fn, observe)
    return RunRecord(
        times=np.array(times), states=np.array(states).reshape(len(times), k),
        residual_norms=np.array(residuals), dims=tuple(instance.dims),
        noise_seed=noise.seed, solve_warnings=stats.fallbacks, error=error,
        config=_snapshot(instance=instance.label, scheme=scheme, profile=profile, noise=noise,
                         integrator=icfg),
    )


def perturbed_start(instance: TvqpInstance, t0: float, norm: float = 1.0, seed: int = 0,
                    eps_fb: float | None = None) -> np.ndarray:
    """Oracle KKT point at ``t0`` plus a seeded perturbation of the given norm.

    The direction is drawn uniformly from the cube and normalised. With
    ``norm = 0`` and ``eps_fb`` given, the point is instead Newton-polished
    onto the perturbed residual so the run starts at equilibrium.
    """
    coeffs = instance.coeff_at(t0)
    z = solve_static_qp(coeffs).as_vector()
    if norm == 0:
        return refine_kkt_point(coeffs, z, eps_fb) if eps_fb is not None else z
    if norm < 0:
        raise ValueError(f"perturbation norm must be non-negative, got {norm}")
    direction = np.random.default_rng(seed).uniform(-1.0, 1.0, size=z.size)
    return z + norm * direction / np.linalg.norm(direction)


def settling_time(record: RunRecord, threshold: float) -> float | None:
    """Earliest recorded time after which the residual stays within ``threshold``."""
    res = np.asarray(record.residual_norms)
    if res.size == 0:
        raise ValueError("empty record")
    above = np.nonzero(res > threshold)[0]
    if above.size == 0:
        return float(record.times[0])
    last = above[-1]
    if last + 1 >= res.size:
        return None
    return float(record.times[last + 1])


def steady_state_residual(record: RunRecord, window: float) -> float:
    """Largest residual over the trailing ``window`` seconds."""
    times = np.asarray(record.times)
    if not window < times[-1] - times[0]:
        raise ValueError(f"window {window} is not shorter than the recorded span")
    mask = times >= times[-1] - window - 1e-12
    return float(np.max(record.residual_norms[mask]))


def format_float(x: float) -> str:
    return repr(float(x)) if math.isfinite(x) else str(float(x))


def write_header(fh, config: dict, seed) -> None:
    fh.write("# seed: " + json.dumps(seed) + "\n")
    fh.write("# config: " + json.dumps(config, sort_keys=True, default=str) + "\n")


def write_csv(record: RunRecord, path, config: dict | None = None) -> None:
    """Trace CSV: ``t, z_1..z_k, residual_norm`` at full double precision."""
    k = record.states.shape[1]
    with open(path, "w", newline="") as fh:
        write_header(fh, config if config is not None else record.config, record.noise_seed)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"z_{i + 1}" for i in range(k)] + ["residual_norm"])
        for t, z, r in zip(record.times, record.states, record.residual_norms):
            writer.writerow([format_float(t)] + [format_float(v) for v in z] + [format_float(r)])
