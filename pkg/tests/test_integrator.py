import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ztvqp.dynamics import NoiseModel, SchemeConfig
from ztvqp.integrator import (IntegratorConfig, Method, RunRecord, integrate, perturbed_start,
                              settling_time, simulate, steady_state_residual, write_csv)
from ztvqp.problem import DimensionError

PTC = SchemeConfig()  # gamma=2, t_c=1, kappa=0.5, alpha=0.5


def make_record(times, residuals):
    times = np.asarray(times, dtype=float)
    return RunRecord(times, np.zeros((times.size, 1)), np.asarray(residuals, dtype=float), (1, 0, 0))


@pytest.fixture(scope="module")
def run_to_two():
    from ztvqp.problem import get_instance

    inst = get_instance("sec4_1")
    z0 = perturbed_start(inst, 1e-4, 1.0, seed=0)
    return simulate(inst, z0, PTC, icfg=IntegratorConfig(t_end=2.0))


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(h=0)
    with pytest.raises(ValueError):
        IntegratorConfig(t0=2.0, t_end=1.0)
    with pytest.raises(ValueError):
        IntegratorConfig(h=1e-10, t0=0.0, t_end=1.0)
    with pytest.raises(ValueError):
        IntegratorConfig(record_stride=0)
    with pytest.raises(ValueError):
        IntegratorConfig(method="HEUN")
    cfg = IntegratorConfig()
    assert cfg.method is Method.RK4 and cfg.t0 == cfg.h == 1e-4 and cfg.n_steps == 19999


def test_settling_time_examples():
    rec = make_record([0, 0.5, 1, 1.5], [1, 0.5, 1e-5, 1e-6])
    assert settling_time(rec, 1e-4) == 1.0
    assert settling_time(rec, 1e-7) is None
    assert settling_time(rec, 10.0) == 0.0
    with pytest.raises(ValueError):
        settling_time(make_record([], []), 1.0)


@given(st.lists(st.floats(0, 10), min_size=1, max_size=30), st.floats(1e-6, 5), st.floats(1e-6, 5))
def test_settling_time_monotone(residuals, th1, th2):
    lo, hi = sorted((th1, th2))
    rec = make_record(np.arange(len(residuals)) * 0.1, residuals)
    s_lo, s_hi = settling_time(rec, lo), settling_time(rec, hi)
    if s_lo is not None:
        assert s_hi is not None and s_hi <= s_lo


def test_steady_state_examples():
    t = np.linspace(0, 2, 201)
    assert steady_state_residual(make_record(t, np.full(201, 1e-4)), 0.5) == 1e-4
    decaying = np.exp(-t)
    assert steady_state_residual(make_record(t, decaying), 0.5) == pytest.approx(math.exp(-1.5))
    with pytest.raises(ValueError):
        steady_state_residual(make_record(t, decaying), 2.0)


def test_start_at_equilibrium(simple_static):
    z0 = perturbed_start(simple_static, 0.0, norm=0.0, eps_fb=PTC.eps_fb)
    rec = simulate(simple_static, z0, PTC, icfg=IntegratorConfig(t_end=0.5))
    assert rec.ok and np.max(rec.residual_norms) <= 1e-9


def test_dimension_mismatch(sec41):
    with pytest.raises(DimensionError):
        simulate(sec41, np.zeros(3), PTC, icfg=IntegratorConfig(t_end=0.01))


def test_perturbed_start(sec41):
    base = perturbed_start(sec41, 0.1, 0.0)
    z = perturbed_start(sec41, 0.1, 2.5, seed=3)
    assert np.linalg.norm(z - base) == pytest.approx(2.5)
    assert np.array_equal(z, perturbed_start(sec41, 0.1, 2.5, seed=3))
    with pytest.raises(ValueError):
        perturbed_start(sec41, 0.1, -1.0)


def test_seeded_runs_are_identical(sec41):
    z0 = perturbed_start(sec41, 1e-4, 1.0, seed=1)
    icfg = IntegratorConfig(t_end=0.05, record_stride=3)
    a = simulate(sec41, z0, PTC.with_zeta(17.07), noise=NoiseModel.combined(42), icfg=icfg)
    b = simulate(sec41, z0, PTC.with_zeta(17.07), noise=NoiseModel.combined(42), icfg=icfg)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.residual_norms, b.residual_norms)
    assert a.noise_seed == 42 and a.config == b.config
    c = simulate(sec41, z0, PTC.with_zeta(17.07), noise=NoiseModel.combined(43), icfg=icfg)
    assert not np.array_equal(a.states, c.states)


def test_recording_layout(sec41):
    rec = simulate(sec41, np.zeros(7), PTC, icfg=IntegratorConfig(t0=0.0, t_end=0.0105, h=1e-3,
                                                                  record_stride=4))
    # steps 0, 4, 8 and the final step 10 (t_end is rounded to the grid)
    assert np.allclose(rec.times, [0.0, 0.004, 0.008, 0.010])
    assert np.all(np.diff(rec.times) > 0) and np.all(rec.residual_norms >= 0)
    assert rec.states.shape == (4, 7) and len(rec.augmented_states) == 4


def test_partial_record_on_abort():
    seen = []
    cfg = IntegratorConfig(t0=0.0, h=0.1, t_end=1.0, record_stride=1)
    err = integrate(lambda t, x, d: (x, 1.0), np.ones(1), cfg, lambda t, j: np.zeros(1),
                    lambda j, t, x, r: seen.append(t), check=lambda t, x: "stop" if t > 0.25 else None)
    assert err == "stop" and len(seen) == 3
    err = integrate(lambda t, x, d: (np.full(1, np.inf), 1.0), np.ones(1), cfg,
                    lambda t, j: np.zeros(1), lambda *a: None)
    assert "non-finite" in err


def test_delta_shared_across_stages():
    calls = []
    cfg = IntegratorConfig(t0=0.0, h=0.1, t_end=0.3, record_stride=1)
    integrate(lambda t, x, d: (d.copy(), 0.0), np.zeros(1), cfg,
              lambda t, j: (calls.append(j), np.full(1, float(j)))[1], lambda *a: None)
    assert calls == [0, 1, 2, 3]


def test_noise_free_convergence_by_one_second(run_to_two):
    assert run_to_two.ok
    at_one = run_to_two.residual_norms[np.argmin(np.abs(run_to_two.times - 1.0))]
    assert at_one <= 1e-3


def test_noise_free_settles_before_t_c(sec41):
    z0 = perturbed_start(sec41, 1e-4, 1.0, seed=0)
    rec = simulate(sec41, z0, PTC, icfg=IntegratorConfig(t_end=1.5))
    tau = settling_time(rec, 1e-3)
    assert tau is not None and tau <= 1.0


def test_sin_noise_steady_state_to_two(sec41):
    z0 = perturbed_start(sec41, 1e-4, 1.0, seed=0)
    rec = simulate(sec41, z0, PTC.with_zeta(0.5), noise=NoiseModel.sin_scaled(0.1),
                   icfg=IntegratorConfig(t_end=2.0))
    assert rec.ok
    assert steady_state_residual(rec, 0.5) <= 1e-3


def test_euler_matches_rk4(sec41):
    z0 = perturbed_start(sec41, 1e-4, 1.0, seed=0)
    runs = [simulate(sec41, z0, PTC, icfg=IntegratorConfig(t_end=1.5, method=m)) for m in Method]
    assert np.max(np.abs(runs[0].states - runs[1].states)) <= 1e-3


def test_euler_gap_is_first_order(sec41):
    z0 = perturbed_start(sec41, 1e-4, 1.0, seed=0)

    def gap(h):
        runs = [simulate(sec41, z0, PTC, icfg=IntegratorConfig(h=h, t0=1e-4, t_end=0.3, method=m,
                                                               record_stride=round(1e-2 / h)))
                for m in Method]
        return np.max(np.abs(runs[0].states - runs[1].states))

    ratio = gap(1e-4) / gap(5e-5)
    assert 1.6 <= ratio <= 2.4


def test_csv_format(sec41, tmp_path):
    rec = simulate(sec41, np.zeros(7), PTC, icfg=IntegratorConfig(t_end=0.002, record_stride=5))
    path = tmp_path / "trace.csv"
    write_csv(rec, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# seed: 0" and lines[1].startswith("# config: {")
    rows = list(csv.reader(lines[2:]))
    assert rows[0] == ["t"] + [f"z_{i}" for i in range(1, 8)] + ["residual_norm"]
    data = np.array(rows[1:], dtype=float)
    assert np.array_equal(data[:, 0], rec.times) and np.array_equal(data[:, 1:8], rec.states)
    assert np.array_equal(data[:, -1], rec.residual_norms)
