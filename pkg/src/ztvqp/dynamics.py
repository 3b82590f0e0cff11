"""Activation catalogue, gain profiles, noise models and the ZNN vector field.

The neural state obeys ``P(t) zdot = -Q(t) z - rho(t) - g(t) act(eps) + delta``
where ``g`` is either a constant gain or the fractional gain
``gamma * t**(alpha - 1)``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache

import numpy as np

from . import _kernels
from .problem import (DEFAULT_EPS_FB, AugmentedState, TvqpCoefficients, TvqpInstance,
                      assemble_dynamics, assemble_tvlme)

logger = logging.getLogger(__name__)

COND_LIMIT = 1e12
COMBINED_WHITE_BOUND = 2.0
NOISE_CHUNK = 1024


class Scheme(str, enum.Enum):
    REF11 = "REF11"
    REF18 = "REF18"
    REF19 = "REF19"
    REF20 = "REF20"
    REF38 = "REF38"
    REF39 = "REF39"
    PTC_NT_FOZNN = "PTC_NT_FOZNN"

    @property
    def code(self) -> int:
        return _kernels.SCHEME_CODES[self.value]


ALL_SCHEMES = tuple(Scheme)


class InputError(ValueError):
    """Non-finite or otherwise unusable input vector."""


class SolveError(ArithmeticError):
    """The linear system for ``zdot`` could not be solved."""

    def __init__(self, t: float, cond: float, msg: str = ""):
        super().__init__(f"t={t:.6g}: P is singular or ill-conditioned (cond~{cond:.3g}) {msg}".strip())
        self.t = t
        self.cond = cond


@dataclass(frozen=True)
class SchemeConfig:
    """Activation scheme and its scalar parameters.

    ``xi`` defaults to ``zeta / gamma``. ``clamp`` is the small positive time
    used both as the lower clamp of ``t`` in fractional powers and as the
    floor of ``t_c - t`` in the time-varying schemes; ``None`` lets the
    integrator substitute its step size.
    """

    scheme: Scheme = Scheme.PTC_NT_FOZNN
    gamma: float = 2.0
    alpha: float = 0.5
    kappa: float = 0.5
    r: float = 0.5
    t_c: float = 1.0
    zeta: float = 0.0
    xi: float | None = None
    eps_fb: float = DEFAULT_EPS_FB
    clamp: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.xi is None:
            object.__setattr__(self, "xi", self.zeta / self.gamma)
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0 < self.kappa < 1:
            raise ValueError(f"kappa must lie in (0, 1), got {self.kappa}")
        if not 0 < self.r < 1:
            raise ValueError(f"r must lie in (0, 1), got {self.r}")
        if not self.t_c > 0:
            raise ValueError(f"t_c must be positive, got {self.t_c}")
        if self.zeta < 0 or self.xi < 0:
            raise ValueError("zeta and xi must be non-negative")
        if not self.eps_fb > 0:
            raise ValueError(f"eps_fb must be positive, got {self.eps_fb}")
        if self.clamp is not None and not self.clamp > 0:
            raise ValueError(f"clamp must be positive, got {self.clamp}")

    def with_clamp(self, h: float) -> "SchemeConfig":
        return self if self.clamp is not None else replace(self, clamp=h)

    def with_zeta(self, zeta: float) -> "SchemeConfig":
        """Copy with a new noise bound and ``xi = zeta / gamma``."""
        return replace(self, zeta=zeta, xi=zeta / self.gamma)

    def packed(self) -> np.ndarray:
        return self._packed

    @cached_property
    def _packed(self) -> np.ndarray:
        clamp = self.clamp if self.clamp is not None else 1e-4
        out = np.array([self.gamma, self.alpha, self.kappa, self.r, self.t_c,
                        self.zeta, self.xi, clamp, clamp])
        out.setflags(write=False)
        return out

    @cached_property
    def code(self) -> int:
        return self.scheme.code

    def default_profile(self) -> "GainProfile":
        """Fractional gain for the proposed scheme, constant gain otherwise."""
        clamp = self.clamp if self.clamp is not None else 1e-4
        if self.scheme is Scheme.PTC_NT_FOZNN:
            return GainProfile(GainKind.FRACTIONAL, self.gamma, self.alpha, clamp)
        return GainProfile(GainKind.CONSTANT, self.gamma, 1.0, clamp)


class GainKind(str, enum.Enum):
    CONSTANT = "CONSTANT"
    FRACTIONAL = "FRACTIONAL"


@dataclass(frozen=True)
class GainProfile:
    kind: GainKind = GainKind.FRACTIONAL
    gamma: float = 2.0
    alpha: float = 1.0
    t_clamp: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "kind", GainKind(self.kind))


def gain_eval(profile: GainProfile, t: float) -> float:
    if profile.kind is GainKind.CONSTANT:
        return profile.gamma
    return profile.gamma * max(t, profile.t_clamp) ** (profile.alpha - 1.0)


def activation_eval(config: SchemeConfig, epsilon, t: float) -> np.ndarray:
    eps = np.asarray(epsilon, dtype=float)
    if not np.all(np.isfinite(eps)):
        raise InputError("activation input contains NaN or inf")
    return np.asarray(_kernels.activation(config.scheme.code, eps, float(t), config.packed()))


class NoiseKind(str, enum.Enum):
    NONE = "NONE"
    SIN_SCALED = "SIN_SCALED"
    CONSTANT = "CONSTANT"
    COMBINED = "COMBINED"


@dataclass(frozen=True)
class NoiseModel:
    """Additive noise ``delta(t)``.

    ``SIN_SCALED``: ``level * sin(t)``; ``CONSTANT``: ``level``;
    ``COMBINED``: ``sin t + cos t + w`` with ``w`` uniform on ``[-2, 2]``,
    drawn independently per component and held constant over each
    integrator step. The deterministic kinds are replicated across all
    components.
    """

    kind: NoiseKind = NoiseKind.NONE
    level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))

    @classmethod
    def none(cls):
        return cls(NoiseKind.NONE)

    @classmethod
    def sin_scaled(cls, amplitude: float):
        return cls(NoiseKind.SIN_SCALED, amplitude)

    @classmethod
    def constant(cls, level: float):
        return cls(NoiseKind.CONSTANT, level)

    @classmethod
    def combined(cls, seed: int = 0):
        return cls(NoiseKind.COMBINED, 1.0, seed)

    @property
    def bound(self) -> float:
        """Supremum over time of a single component ``|delta_i(t)|``."""
        if self.kind is NoiseKind.NONE:
            return 0.0
        if self.kind is NoiseKind.COMBINED:
            return math.sqrt(2.0) + COMBINED_WHITE_BOUND
        return abs(self.level)

    def is_zero(self) -> bool:
        return self.kind is NoiseKind.NONE or (self.kind is not NoiseKind.COMBINED and self.level == 0)


def default_zeta(noise: NoiseModel, k: int, mode: str = "component", factor: float = 5.0) -> float:
    """Noise-rejection gain as a multiple of the noise bound.

    ``mode="component"`` uses the per-component bound, ``mode="norm"`` the
    bound on ``||delta||_2`` (component bound times ``sqrt(k)``).
    """
    if mode == "component":
        return factor * noise.bound
    if mode == "norm":
        return factor * noise.bound * math.sqrt(k)
    raise ValueError(f"unknown zeta mode {mode!r}")


@lru_cache(maxsize=8)
def _white_block(seed: int, block: int, k: int) -> np.ndarray:
    rng = np.random.default_rng([seed, block, k])
    out = rng.uniform(-COMBINED_WHITE_BOUND, COMBINED_WHITE_BOUND, size=(NOISE_CHUNK, k))
    out.setflags(write=False)
    return out


def noise_sample(model: NoiseModel, t: float, k: int, step: int = 0) -> np.ndarray:
    """Noise vector at time ``t``; ``step`` indexes the white component."""
    kind = model.kind
    if kind is NoiseKind.NONE:
        return np.zeros(k)
    if kind is NoiseKind.SIN_SCALED:
        return np.full(k, model.level * math.sin(t))
    if kind is NoiseKind.CONSTANT:
        return np.full(k, float(model.level))
    white = _white_block(model.seed, step // NOISE_CHUNK, k)[step % NOISE_CHUNK]
    return (math.sin(t) + math.cos(t)) + white


@dataclass
class RhsStats:
    """Counters shared across the calls of one run."""

    fallbacks: int = 0
    last_cond: float = 1.0
    messages: list = field(default_factory=list)


def rhs_from_coeffs(coeffs: TvqpCoefficients, z: np.ndarray, t: float, config: SchemeConfig,
                    gain: float, delta: np.ndarray, stats: RhsStats | None = None):
    """Vector field at a flat state; returns ``(zdot, ||eps||)``."""
    zdot, nrm, cond = _kernels.znn_rhs(
        coeffs.omega, coeffs.p, coeffs.a_mat, coeffs.b, coeffs.c_mat, coeffs.d,
        coeffs.omega_dot, coeffs.p_dot, coeffs.a_dot, coeffs.b_dot, coeffs.c_dot, coeffs.d_dot,
        z, config.eps_fb, gain, config.code, config._packed, t, delta)
    if stats is not None:
        stats.last_cond = cond
    if cond < COND_LIMIT:
        return zdot, nrm
    return _lstsq_fallback(coeffs, z, t, config, gain, delta, cond, stats), nrm


def _lstsq_fallback(coeffs, z, t, config, gain, delta, cond, stats):
    dyn = assemble_dynamics(coeffs, z, config.eps_fb)
    eps = assemble_tvlme(coeffs, z, config.eps_fb).epsilon
    act = np.asarray(_kernels.activation(config.scheme.code, eps, t, config.packed()))
    rvec = -dyn.q_mat @ z - dyn.rho - gain * act + delta
    sol, *_ = np.linalg.lstsq(dyn.p_mat, rvec, rcond=None)
    if not np.all(np.isfinite(sol)):
        raise SolveError(t, cond, "and the least-squares fallback failed")
    msg = f"t={t:.6g}: ill-conditioned P (cond~{cond:.3g}); used least-squares solution"
    logger.warning(msg)
    if stats is not None:
        stats.fallbacks += 1
        stats.messages.append(msg)
    return sol


def rhs(instance: TvqpInstance, z: AugmentedState, config: SchemeConfig,
        profile: GainProfile | None = None, noise: NoiseModel | None = None,
        *, step: int = 0, delta=None) -> np.ndarray:
    """``zdot`` of the (noise-polluted) neural dynamics at ``z.t``."""
    t = float(z.t)
    zvec = z.as_vector()
    if profile is None:
        profile = config.default_profile()
    if delta is None:
        delta = noise_sample(noise or NoiseModel.none(), t, zvec.size, step)
    coeffs = instance.coeff_at(t)
    zdot, _ = rhs_from_coeffs(coeffs, zvec, t, config, gain_eval(profile, t),
                              np.asarray(delta, dtype=float))
    return zdot
