"""Compiled vs numpy kernel timings.

Run with ``python benchmarks/bench_kernels.py``. Reports per-call times of
the reaction/Jacobian assembly, the block-tridiagonal Newton solve and the
annulus binning, plus one end-to-end carrier-dynamics run per backend.
"""

import argparse
import time

import numpy as np

from aidsim import _kernels
from aidsim import carrier_dynamics as cd


def timeit(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def solver_inputs(params, grid):
    solver = cd.CarrierSolver(params, grid)
    y = cd.initial_state(params, grid).as_array()
    y[:, 2:] = 1e-3
    return solver, y


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--cycles", type=float, default=2000, help="cycles for the end-to-end run")
    args = ap.parse_args()

    params = cd.MaterialParams()
    grid = cd.RadialGrid.geometric()
    solver, y = solver_inputs(params, grid)
    rng = np.random.default_rng(0)
    img = rng.integers(0, 500, (1000, 1000)).astype(float)
    idx = np.floor(np.hypot(*np.indices(img.shape) - 499.5) + 0.5).astype(np.int64)
    nbins = int(idx.max()) + 1

    backends = _kernels.available_backends()
    print(f"grid cells: {grid.size}; default backend: {_kernels.BACKEND}")
    print(f"{'backend':<8} {'rhs+jac (us)':>13} {'newton (us)':>12} {'annulus 1e6 px (ms)':>20} "
          f"{'PDE run (s)':>12}")
    results = {}
    for name, k in backends.items():
        f, A = k.reaction_diffusion(y, solver.theta0, solver.theta_minus, solver.theta_n, solver.consts,
                                    solver.lo, solver.up)
        rhs = np.ascontiguousarray(-f * 1e-9)
        t_rhs = timeit(lambda: k.reaction_diffusion(y, solver.theta0, solver.theta_minus, solver.theta_n,
                                                    solver.consts, solver.lo, solver.up), args.repeat)
        t_newton = timeit(lambda: k.newton_solve(A, 1e-9, solver.lo, solver.up, solver.consts, rhs), args.repeat)
        t_ann = timeit(lambda: k.annulus_sums(img, idx, nbins), max(3, args.repeat // 4))
        t0 = time.perf_counter()
        cd.simulate(params, [args.cycles * params.cycle_time_s], grid=grid, kernels=k)
        t_run = time.perf_counter() - t0
        results[name] = (t_rhs, t_newton, t_ann, t_run)
        print(f"{name:<8} {1e6 * t_rhs:>13.1f} {1e6 * t_newton:>12.1f} {1e3 * t_ann:>20.2f} {t_run:>12.2f}")
    if "cython" in results:
        py, cy = results["python"], results["cython"]
        print("speed-up  " + "  ".join(f"{a / b:6.1f}x" for a, b in zip(py, cy)))


if __name__ == "__main__":
    main()
