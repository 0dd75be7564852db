"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Kernel rows call both implementations directly in this process. The solver
rows run a full reference solve in a subprocess per backend, selected with
APNN_DISABLE_NUMBA, so the timing covers the dispatch actually used.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from apnn import kernels
from apnn._accel import USE_NUMBA
from apnn.quadrature import gauss_legendre


def best_of(fn, repeat):
    fn()  # warm-up (compilation, caches)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def tanh_case(rng):
    Z = rng.normal(size=(3, 1920, 64))
    gY = rng.normal(size=Z.shape)
    Y, S = kernels.tanh_dual_forward_numpy(Z)
    return {
        "tanh dual forward": {
            "numpy": lambda: kernels.tanh_dual_forward_numpy(Z),
            "numba": lambda: kernels.tanh_dual_forward_numba(Z),
        },
        "tanh dual backward": {
            "numpy": lambda: kernels.tanh_dual_backward_numpy(gY, Y[0], S, Z),
            "numba": lambda: kernels.tanh_dual_backward_numba(gY, Y[0], S, Z),
        },
    }


def solver_cases(rng):
    nx, n = 200, 30
    rule = gauss_legendre(n)
    dx = 1.0 / nx
    rho0 = np.linspace(1.0, 0.0, nx + 1)
    g0 = np.zeros((nx, n))
    z = np.zeros(nx + 1)
    mm = (200, 0.2 * dx * dx, dx, 1e-3, rule.nodes, rule.avg_weights, np.ones(nx), np.zeros(nx), z, z,
          np.ones(n), np.zeros(n), False, 1e6)
    f0 = np.ones((nx + 1, n))
    do = (200, 0.9 * dx, dx, 1.0, rule.nodes, rule.avg_weights, np.ones(nx + 1), z, z, np.ones(n), np.zeros(n),
          False, 1e6)
    return {
        "micro-macro 200 steps": {
            "numpy": lambda: kernels.micro_macro_advance_numpy(rho0.copy(), g0.copy(), *mm),
            "numba": lambda: kernels.micro_macro_advance_numba(rho0.copy(), g0.copy(), *mm),
        },
        "discrete ordinates 200 steps": {
            "numpy": lambda: kernels.transport_advance_numpy(f0.copy(), *do),
            "numba": lambda: kernels.transport_advance_numba(f0.copy(), *do),
        },
    }


SOLVE = (
    "import time; from apnn.problems import make_problem; from apnn.reference import default_grid, "
    "solve_micro_macro_fd as s; p = make_problem('II', 1e-8); g = default_grid(p, nx=100); s(p, g, [0.001]); "
    "t = time.perf_counter(); s(p, g, [0.02]); print(time.perf_counter() - t)"
)


def end_to_end(disable):
    env = dict(os.environ, APNN_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", SOLVE], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not USE_NUMBA:
        sys.exit("numba is disabled or missing; unset APNN_DISABLE_NUMBA to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speed-up':>9s}")
    for cases in (tanh_case(rng), solver_cases(rng)):
        for name, impls in cases.items():
            a = best_of(impls["numpy"], args.repeat) * 1e3
            b = best_of(impls["numba"], args.repeat) * 1e3
            print(f"{name:32s} {a:12.2f} {b:12.2f} {a / b:8.1f}x")
    a, b = end_to_end(True) * 1e3, end_to_end(False) * 1e3
    print(f"{'micro-macro solve (subprocess)':32s} {a:12.2f} {b:12.2f} {a / b:8.1f}x")


if __name__ == "__main__":
    main()
