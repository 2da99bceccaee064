"""Compare the compiled and numpy primal-dual kernels.

Usage::

    python benchmarks/bench_kernels.py [--sizes 64 128 256] [--iters 200] [--repeat 3]

For each grid size both backends run the same number of Chambolle-Pock
iterations from the same state; the script prints the best wall time per
backend, the speed-up and the max difference of the resulting iterates.
A final row times one full 2D solve with each backend.
"""

import argparse
import time

import numpy as np

from lgflow import _kernels, problems, solver
from lgflow import lagrangian as lg


def _state(n):
    prob = problems.bump2d(n=n, T=0.01)
    spec_mu = lg.with_mu(prob.spec, 0.0)
    data = solver._StepData(prob.grid, spec_mu, prob.spec)
    up = data.to2(prob.u0.values)
    bg = np.zeros(prob.grid.n_boundary)
    return prob, data, up, bg


def run_kernel(name, n, iters):
    kern = _kernels.get(name)
    prob, data, up, bg = _state(n)
    x, xb = up.copy(), up.copy()
    px, py = np.zeros(data.shape2), np.zeros(data.shape2)
    q = np.zeros(prob.grid.n_boundary)
    sigma, tau = 1.0 / data.L, 1.0 / data.L
    t0 = time.perf_counter()
    kern.pd_run(up, data.ax, data.ay, data.bcell, data.bc, bg, data.m, 0.002, prob.grid.h,
                x, xb, px, py, q, sigma, tau, iters, True, 1.0)
    v = np.empty(data.shape2)
    kern.pd_gap(up, data.ax, data.ay, data.bcell, data.bc, bg, data.m, 0.002, prob.grid.h,
                px, py, q, v)
    return time.perf_counter() - t0, v


def run_solve(name, n):
    old = _kernels.BACKEND
    _kernels.BACKEND = name
    try:
        t0 = time.perf_counter()
        solver.solve(problems.bump2d(n=n, T=0.02), solver.SolveConfig(tau=0.002))
        return time.perf_counter() - t0
    finally:
        _kernels.BACKEND = old


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--iters", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--solve-size", type=int, default=64)
    args = ap.parse_args(argv)
    names = sorted(_kernels.BACKENDS)
    if "cython" not in names:
        print("compiled kernels not available; timing the numpy backend only")
    print(f"{'cells':>8} " + " ".join(f"{n + ' [s]':>12}" for n in names) + f" {'speedup':>8} {'max diff':>10}")
    for n in args.sizes:
        best, out = {}, {}
        for name in names:
            times = []
            for _ in range(args.repeat):
                t, v = run_kernel(name, n, args.iters)
                times.append(t)
            best[name], out[name] = min(times), v
        speed = best["python"] / best["cython"] if "cython" in best else 1.0
        diff = float(np.max(np.abs(out["python"] - out["cython"]))) if "cython" in out else 0.0
        print(f"{n * n:>8} " + " ".join(f"{best[k]:>12.4f}" for k in names)
              + f" {speed:>8.1f} {diff:>10.2e}")
    solve = {name: run_solve(name, args.solve_size) for name in names}
    print(f"full solve {args.solve_size}^2, 10 steps: "
          + ", ".join(f"{k} {v:.2f} s" for k, v in solve.items()))


if __name__ == "__main__":
    main()
