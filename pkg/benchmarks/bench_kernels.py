"""Time the numba kernels against the numpy fallback on the hovercraft OCP.

    python3 benchmarks/bench_kernels.py [--repeat 200]

Also times one full closed-loop simulation under the active backend
(select it with SCPKIT_BACKEND=numba|numpy).
"""
import argparse
import time

import numpy as np
import scipy.linalg as sla

from scpkit import hovercraft as hv
from scpkit import kernels

ARGS = (1, hv.HORIZON, hv.DT, 0.974, 0.0125, 0.0485)


def best_of(fn, repeat):
    fn()  # first call compiles under numba
    best = np.inf
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--no-sim", action="store_true")
    a = ap.parse_args()

    rng = np.random.default_rng(0)
    n = hv.OcpLayout(hv.HORIZON, True).n
    x = rng.uniform(-0.5, 0.5, n)
    lam = rng.standard_normal(6 * (hv.HORIZON + 1))
    B = rng.standard_normal((250, 250))
    ldu, ipiv, _ = sla.lapack.dsytrf(B + B.T, lower=1)
    s, u = rng.standard_normal(6), np.array([0.1, 0.2])

    nb, npk = kernels.numba_impl(), kernels.numpy_impl
    cases = {
        "hover_g": lambda m: m.hover_g(x, *ARGS),
        "hover_jac": lambda m: m.hover_jac(x, *ARGS),
        "hover_lag_hess": lambda m: m.hover_lag_hess(x, lam, *ARGS),
        "hover_rk4": lambda m: m.hover_rk4(s, u, hv.DT, 10, 0.974, 0.0125, 0.0485),
        "sytrf_inertia(250)": lambda m: m.sytrf_inertia(ldu, ipiv),
    }
    print(f"{'kernel':<20}{'numpy us':>12}{'numba us':>12}{'speedup':>10}")
    for name, call in cases.items():
        t_np = best_of(lambda: call(npk), a.repeat)
        t_nb = best_of(lambda: call(nb), a.repeat)
        print(f"{name:<20}{t_np * 1e6:12.2f}{t_nb * 1e6:12.2f}{t_np / t_nb:10.2f}")

    if not a.no_sim:
        t0 = time.perf_counter()
        tr = hv.simulate_closed_loop()
        print(f"closed loop [{kernels.BACKEND}]: {time.perf_counter() - t0:.2f}s wall, stop_time={tr.stop_time}")


if __name__ == "__main__":
    main()
