"""Acceptance criteria, one test per criterion.

Each test logs a single PASS/FAIL line (also repeated in the terminal
summary) and then asserts.  Runtime budgets are part of each criterion.
"""

import math
import os
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from lgflow import boundedness as bd
from lgflow import certify as C
from lgflow import grid as gr
from lgflow import mollify as mo
from lgflow import problems
from lgflow import solver as sv

CONFIGS = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir, "configs"))
NEWTON = sv.SolveConfig(tau=0.01, method="newton", mu=0.05)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def decreasing(xs):
    return all(b < a for a, b in zip(xs, xs[1:]))


# ---------------------------------------------------------------- 1

def _random_grid(rng, dim):
    if dim == 1:
        n = int(rng.integers(2, 200))
        return gr.GridSpec((n,), float(rng.uniform(0.001, 1.0)))
    cells = tuple(int(c) for c in rng.integers(2, 40, size=2))
    g = gr.GridSpec(cells, float(rng.uniform(0.001, 1.0)))
    if rng.random() < 0.5:
        mask = rng.random(cells) < 0.8
        mask.flat[0] = True
        g = g.with_mask(mask)
    return g


def test_criterion_1_gauss_green(acceptance_report):
    rng = np.random.default_rng(2024)
    worst = {1: 0.0, 2: 0.0}
    with Timer() as tm:
        for dim in (1, 2):
            for _ in range(100):
                g = _random_grid(rng, dim)
                u = gr.ScalarField(g, rng.normal(size=g.cells) * 10.0 ** rng.uniform(-3, 3))
                z = gr.VectorField(g, [rng.normal(size=g.face_shape(a)) for a in range(dim)],
                                   rng.normal(size=g.n_boundary))
                zb = gr.BoundaryTrace(g, z.boundary)
                size = (abs(gr.inner(gr.gradient(u), z)) + abs(gr.inner(u, gr.divergence(z)))
                        + abs(gr.inner(zb, gr.trace(u))))
                rel = gr.gauss_green_residual(u, z, zb) / size
                worst[dim] = max(worst[dim], rel)
    ok = max(worst.values()) <= 1e-12 and tm.seconds < 5.0
    acceptance_report(1, "gauss-green", ok, f"max relative residual 1D {worst[1]:.1e}, "
                      f"2D {worst[2]:.1e}; {tm.seconds:.1f} s")
    assert ok


# ---------------------------------------------------------------- 2

def test_criterion_2_fenchel_certificates(acceptance_report):
    prob = problems.bump2d(n=64, T=0.1)
    pd_cfg = sv.SolveConfig(tau=0.002)
    with Timer() as t_newton:
        newton = sv.solve(prob, sv.SolveConfig(tau=0.002, method="newton", mu=0.05))
        r_newton = C.check_subgradient(newton).residual
    with Timer() as t_pd:
        pd = sv.solve(prob, pd_cfg)
        r_pd = C.check_subgradient(pd).residual
    ok = (newton.n_steps == pd.n_steps == 50 and r_newton <= 1e-8
          and r_pd <= 10 * pd_cfg.tol and t_newton.seconds < 60 and t_pd.seconds < 60)
    acceptance_report(2, "fenchel certificates", ok,
                      f"64x64, 50 steps; newton {r_newton:.1e} in {t_newton.seconds:.0f} s, "
                      f"primal-dual {r_pd:.1e} (limit {10 * pd_cfg.tol:.0e}) "
                      f"in {t_pd.seconds:.0f} s")
    assert ok


# ---------------------------------------------------------------- 3

def _radial_error(n):
    prob = problems.radial_annulus(n=n, T=0.5)
    tr = sv.solve(prob, sv.SolveConfig(tau=0.5 / n))
    act = prob.grid.active
    u = tr.u.frames[-1].values[act]
    exact = problems.radial_exact(prob.grid.centers, 0.5)[act]
    return float(np.linalg.norm(u - exact) / np.linalg.norm(exact))


@pytest.mark.slow
def test_criterion_3_radial_solution(acceptance_report):
    with Timer() as tm:
        coarse = _radial_error(64)
        fine = _radial_error(128)
    ratio = coarse / fine
    ok = fine <= 0.05 and ratio >= 1.5 and tm.seconds < 600
    acceptance_report(3, "radial solution", ok,
                      f"relative L2 error {fine:.2%} at 128^2, tau=1/256; ratio {ratio:.2f} "
                      f"from 64^2; {tm.seconds:.0f} s")
    assert ok


# ---------------------------------------------------------------- 4

def test_criterion_4_comparison(acceptance_report):
    specs = [(s, 1, 64) for s in range(10)] + [(s, 2, 32) for s in range(10, 20)]
    results = []
    with Timer() as tm:
        for seed, dim, n in specs:
            pa, pb = problems.ordered_pair(seed, n=n, dim=dim)
            r = C.check_comparison(sv.solve(pa, NEWTON), sv.solve(pb, NEWTON), tol=1e-8)
            results.append(r)
    passed = sum(r.passed for r in results)
    nontrivial = sum(r.extra["curve"][0] > 0 for r in results)
    worst = max(r.residual for r in results)
    ok = passed == 20 and tm.seconds < 300
    acceptance_report(4, "comparison", ok,
                      f"{passed}/20 pairs within 1e-8*scale ({nontrivial} with positive "
                      f"initial excess), worst {worst:.1e}; {tm.seconds:.0f} s")
    assert ok


# ---------------------------------------------------------------- 5

def test_criterion_5_mu_stability(acceptance_report):
    mus = [0.1, 0.05, 0.025, 0.0125]
    cases = [problems.plateau1d(n=200, T=0.05), problems.bump2d(n=32, T=0.05)]
    details, ok = [], True
    with Timer() as tm:
        for prob in cases:
            rep = sv.stability_sweep(prob, mus, replace(NEWTON, tau=0.005))
            good = (decreasing(rep.distances) and max(rep.max_dual_norm) <= 1 + 1e-8
                    and all(0.0 <= lo and hi <= m * rep.measure
                            for m, lo, hi in zip(mus, rep.mu_gap_min, rep.mu_gap_max)))
            ok &= good
            details.append(f"{prob.name}: distances "
                           + ",".join(f"{d:.2e}" for d in rep.distances)
                           + f", max|z| {max(rep.max_dual_norm):.9f}")
    ok &= tm.seconds < 600
    acceptance_report(5, "mu-stability", ok, "; ".join(details) + f"; {tm.seconds:.0f} s")
    assert ok


# ---------------------------------------------------------------- 6

def _sine_series(K):
    g = gr.GridSpec((8,), 1 / 8)
    t = np.linspace(0.0, 1.0, K + 1)
    x = g.centers[..., 0]
    return gr.TimeSeries(t, [gr.ScalarField(g, np.sin(3 * s + x)) for s in t])


def test_criterion_6_mollifier(acceptance_report):
    deltas = [0.2, 0.1, 0.05, 0.025]
    with Timer() as tm:
        res = []
        for K in (50, 100, 200, 400):
            u = _sine_series(K)
            ud = mo.exp_mollify(u, mo.MollifyConfig(0.3, gr.ScalarField.constant(u.grid, 0.0)))
            res.append(mo.derivative_identity_residual(u, ud, 0.3))
        order = min(math.log2(a / b) for a, b in zip(res, res[1:]))

        rng = np.random.default_rng(6)
        slack = -math.inf
        for _ in range(200):
            K = int(rng.integers(2, 40))
            g = gr.GridSpec((int(rng.integers(2, 10)),), 0.1)
            times = np.cumsum(np.r_[0.0, rng.uniform(1e-3, 0.1, K)])
            u = gr.TimeSeries.from_stack(g, times, rng.normal(size=(K + 1,) + g.cells))
            w = gr.ScalarField(g, rng.normal(size=g.cells))
            delta = float(10.0 ** rng.uniform(-3, 1))
            ud = mo.exp_mollify(u, mo.MollifyConfig(delta, w))
            lhs = mo.lp_space_time(ud)
            rhs = mo.lp_space_time(u) + math.sqrt(delta) * gr.norm_l2(w)
            slack = max(slack, lhs - rhs)

        columns_ok, notes = True, []
        for name, series in (("moving step", problems.moving_step_series()),
                             ("breathing step", problems.breathing_step_series())):
            rows = mo.area_strict_report(series, deltas)
            for col in ("l1_gap", "area_gap", "trace_gap"):
                vals = [getattr(r, col) for r in rows]
                if all(v == 0.0 for v in vals):
                    notes.append(f"{name} {col} identically 0")
                    continue
                columns_ok &= decreasing(vals)
    ok = order >= 1.8 and slack <= 1e-8 and columns_ok and tm.seconds < 60
    acceptance_report(6, "mollifier", ok,
                      f"derivative-identity order {order:.2f}, contraction worst excess "
                      f"{slack:.1e}, columns decreasing {columns_ok} ({'; '.join(notes)}); "
                      f"{tm.seconds:.1f} s")
    assert ok


# ---------------------------------------------------------------- 7

def test_criterion_7_degiorgi(acceptance_report):
    cyl = bd.Cylinder((0.5, 0.5), 0.05, 0.25, 0.16)
    cfg = bd.DeGiorgiConfig()
    with Timer() as tm:
        runs = [sv.solve(problems.random_bumps(s, n=32, T=0.05),
                         replace(NEWTON, tau=0.005)).u for s in range(20)]
        c_cal = bd.calibrate_sup_constant(runs[0], cyl, cfg)
        cal = replace(cfg, c_cal=c_cal)
        held = [bd.degiorgi_supbound(u, cyl, cal) for u in runs[1:]]
        sound = sum(r.sound for r in held)

        geo_ok = True
        for C_, b, beta in [(1.0, 2.0, 1.0), (5.0, 4.0, 0.5), (0.2, 16.0, 2.0), (2.0, 1.5, 0.25)]:
            thr = bd.fast_geometric_threshold(C_, b, beta)
            below = bd.fast_geometric(0.9 * thr, C_, b, beta, n=200)
            above = bd.fast_geometric(1.1 * thr, C_, b, beta, n=200)
            geo_ok &= bool(below[-1] <= 1e-100 and np.all(np.diff(below) <= 0.0)
                           and math.isinf(above[-1]))
    ok = sound == 19 and geo_ok and tm.seconds < 300
    acceptance_report(7, "de giorgi", ok,
                      f"c_cal={c_cal:.4f} from seed 0, {sound}/19 held-out sound; fast-"
                      f"geometric below/above threshold {'ok' if geo_ok else 'wrong'}; "
                      f"{tm.seconds:.0f} s")
    assert ok


# ---------------------------------------------------------------- 8

def test_criterion_8_unbounded_growth(acceptance_report):
    with Timer() as tm:
        g = bd.centred_grid(2, 1025)
        rows = bd.ball_max_growth(bd.unbounded_example(2, g, 0.0))
        ratios = bd.growth_ratios(rows)
    ok = len(ratios) >= 5 and all(1.8 <= q <= 2.05 for q in ratios) and tm.seconds < 10
    acceptance_report(8, "unbounded growth", ok,
                      f"{len(ratios)} doublings down to radius {rows[-1][1]:g}, ratios "
                      f"{min(ratios):.3f}..{max(ratios):.3f}; {tm.seconds:.1f} s")
    assert ok


# ---------------------------------------------------------------- 9

def _cli(*args, env):
    return subprocess.run([sys.executable, "-m", "lgflow.cli", *map(str, args)], env=env,
                          capture_output=True, text=True)


def _tree(root):
    out = {}
    for d, _, files in os.walk(root):
        for f in files:
            p = os.path.join(d, f)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


def test_criterion_9_determinism(acceptance_report, tmp_path):
    env = dict(os.environ, SOURCE_DATE_EPOCH="1700000000")
    codes, trees = [], []
    with Timer() as tm:
        for rep in ("a", "b"):
            root = tmp_path / rep
            for name in ("plateau1d", "bump2d_newton"):
                cfg = os.path.join(CONFIGS, name + ".toml")
                out = root / name
                codes.append(_cli("solve", cfg, "--out", out, env=env).returncode)
                codes.append(_cli("certify", out, "--config", cfg, env=env).returncode)
            trees.append(_tree(root))
    same = trees[0] == trees[1]
    ok = same and codes == [0] * 8 and len(trees[0]) > 0 and tm.seconds < 120
    acceptance_report(9, "determinism", ok,
                      f"{len(trees[0])} files from two solve+certify runs "
                      f"{'byte-identical' if same else 'DIFFER'}, exit codes {set(codes)}; "
                      f"{tm.seconds:.0f} s")
    assert ok
