"""Zeroing-neural-network solvers for time-variant quadratic programs."""

from ._kernels import BACKEND
from .dynamics import (ALL_SCHEMES, GainKind, GainProfile, NoiseKind, NoiseModel, Scheme,
                       SchemeConfig, activation_eval, default_zeta, gain_eval, noise_sample, rhs)
from .integrator import (IntegratorConfig, Method, RunRecord, perturbed_start, settling_time,
                         simulate, steady_state_residual, write_csv)
from .oracle import (OracleSolution, reference_trajectory, settling_bound, solve_static_qp,
                     steady_state_bound)
from .problem import (AugmentedState, TvqpCoefficients, TvqpInstance, assemble_dynamics,
                      assemble_tvlme, fb_perturbed, get_instance, kkt_residual, sec4_1_instance,
                      static_instance)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ALL_SCHEMES", "GainKind", "GainProfile", "NoiseKind", "NoiseModel", "Scheme",
    "SchemeConfig", "activation_eval", "default_zeta", "gain_eval", "noise_sample", "rhs",
    "IntegratorConfig", "Method", "RunRecord", "perturbed_start", "settling_time", "simulate",
    "steady_state_residual", "write_csv", "OracleSolution", "reference_trajectory",
    "settling_bound", "solve_static_qp", "steady_state_bound", "AugmentedState",
    "TvqpCoefficients", "TvqpInstance", "assemble_dynamics", "assemble_tvlme", "fb_perturbed",
    "get_instance", "kkt_residual", "sec4_1_instance", "static_instance",
]
