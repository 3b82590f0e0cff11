import numpy as np
import pytest

from ztvqp.problem import get_instance, static_instance


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running simulation")


@pytest.fixture
def sec41():
    return get_instance("sec4_1")


@pytest.fixture
def simple_static():
    """min |y|^2 / 2 s.t. y1 + y2 = 1, -1 <= y <= 1."""
    return static_instance(np.eye(2), np.zeros(2), [[1.0, 1.0]], [1.0],
                           np.vstack([np.eye(2), -np.eye(2)]), np.ones(4))


def random_qp(rng, n, m, l):
    """Feasible random QP with Omega = M'M + 0.1 I and a bounded polytope."""
    mm = rng.standard_normal((n, n))
    omega = mm.T @ mm + 0.1 * np.eye(n)
    y_feas = rng.uniform(-0.5, 0.5, n)
    a_mat = rng.standard_normal((m, n))
    c_mat = rng.standard_normal((l, n))
    d = c_mat @ y_feas + rng.uniform(0.05, 1.0, l)
    return static_instance(omega, rng.standard_normal(n), a_mat, a_mat @ y_feas, c_mat, d)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
