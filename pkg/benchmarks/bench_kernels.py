"""Compare the compiled and pure-Python kernels.

Run with ``python3 benchmarks/bench_kernels.py``. Prints the per-call time
of each hot kernel and of one simulated second of the two-variable example.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ztvqp import _kernels
from ztvqp._kernels import _pykernels


def kernel_args(seed=0, n=7, m=3, l=14):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal
    omega = np.eye(n) + 0.1 * (lambda a: a @ a.T)(g((n, n)))
    coeffs = [omega, g(n), g((m, n)), g(m), np.vstack([np.eye(n), -np.eye(n)]), np.ones(l)]
    dots = [0.1 * g(c.shape) for c in coeffs]
    z = g(n + m + l)
    params = np.array([2.0, 0.5, 0.5, 0.5, 1.0, 0.5, 0.25, 1e-4, 1e-4])
    return coeffs + dots + [z, 1e-6, 1.5, 6, params, 0.3, np.zeros(n + m + l)]


def time_call(fn, args, number):
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=5)) / number


def simulate_seconds(backend: str, t_end: float) -> float:
    """Wall time of a fresh interpreter simulating ``t_end`` seconds."""
    code = (
        "import time; from ztvqp import *; import numpy as np\n"
        "inst = get_instance('sec4_1')\n"
        "t = time.perf_counter()\n"
        f"simulate(inst, np.zeros(7), SchemeConfig(), None, NoiseModel.sin_scaled(0.1), "
        f"IntegratorConfig(t_end={t_end}))\n"
        "print(time.perf_counter() - t)\n"
    )
    env = dict(os.environ, ZTVQP_PURE_PYTHON="1" if backend == "python" else "0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--number", type=int, default=2000)
    parser.add_argument("--t-end", type=float, default=0.2)
    args = parser.parse_args()
    if _kernels.compiled is None:
        print("compiled kernels are not built; only the fallback can be timed")
    rhs_args = kernel_args()
    dh = np.array([[0.0, -np.pi / 2, 0.36, 0.0], [0.0, np.pi / 2, 0.0, 0.0],
                   [0.0, np.pi / 2, 0.42, 0.0], [0.0, -np.pi / 2, 0.0, 0.0],
                   [0.0, -np.pi / 2, 0.4, 0.0], [0.0, np.pi / 2, 0.0, 0.0],
                   [0.0, 0.0, 0.126, 0.0]])
    theta = np.linspace(-0.5, 0.5, 7)
    print(f"{'kernel':<28s}{'python (us)':>14s}{'compiled (us)':>16s}{'speedup':>10s}")
    rows = [("znn_rhs (k=24, PTC)", "znn_rhs", rhs_args),
            ("residual_norm (k=24)", "residual_norm", rhs_args[:6] + [rhs_args[12], 1e-6]),
            ("activation PTC (k=24)", "activation", [6, rhs_args[12], 0.3, rhs_args[16]]),
            ("dh_fk_jac (7 joints)", "dh_fk_jac", [dh, theta])]
    for label, name, fargs in rows:
        t_py = time_call(getattr(_pykernels, name), fargs, args.number)
        if _kernels.compiled is not None:
            t_c = time_call(getattr(_kernels.compiled, name), fargs, args.number)
            print(f"{label:<28s}{t_py * 1e6:14.2f}{t_c * 1e6:16.2f}{t_py / t_c:10.1f}")
        else:
            print(f"{label:<28s}{t_py * 1e6:14.2f}{'-':>16s}{'-':>10s}")
    backends = ["python"] + (["cython"] if _kernels.compiled is not None else [])
    walls = {b: simulate_seconds(b, args.t_end) for b in backends}
    line = ", ".join(f"{b}: {w / args.t_end:.2f} s" for b, w in walls.items())
    print(f"wall time per simulated second (RK4, h=1e-4): {line}")


if __name__ == "__main__":
    main()
