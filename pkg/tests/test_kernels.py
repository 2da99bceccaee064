import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq

from lgflow import _kernels, problems, solver
from lgflow import lagrangian as lg

needs_c = pytest.mark.skipif("cython" not in _kernels.BACKENDS,
                             reason="compiled kernels not built")
NAMES = sorted(_kernels.BACKENDS)


def state(prob, mu):
    spec_mu = lg.with_mu(prob.spec, mu)
    data = solver._StepData(prob.grid, spec_mu, prob.spec)
    up = data.to2(prob.u0.values)
    bg = np.linspace(-0.5, 0.5, prob.grid.n_boundary)
    return data, up, bg


def run(name, prob, mu, iters, accelerate):
    kern = _kernels.get(name)
    data, up, bg = state(prob, mu)
    x, xb = up.copy(), up.copy()
    px, py = np.zeros(data.shape2), np.zeros(data.shape2)
    q = np.zeros(prob.grid.n_boundary)
    sig, tau = kern.pd_run(up, data.ax, data.ay, data.bcell, data.bc, bg, data.m, 0.01,
                           prob.grid.h, x, xb, px, py, q, 1.0 / data.L, 1.0 / data.L, iters,
                           accelerate, 1.0)
    v = np.empty(data.shape2)
    gaps = kern.pd_gap(up, data.ax, data.ay, data.bcell, data.bc, bg, data.m, 0.01,
                       prob.grid.h, px, py, q, v)
    return (sig, tau), (x, px, py, q, v), gaps


def radial_oracle(s, a):
    # root in r = t / sqrt(1 + t^2) of  a r / sqrt(1 - r^2) + r = s
    def f(r):
        return a * r / math.sqrt(1.0 - r * r) + r - s
    hi = min(s, math.nextafter(1.0, 0.0))
    if s == 0.0 or f(hi) <= 0.0:
        return hi
    return brentq(f, 0.0, hi, xtol=1e-300, rtol=1e-15, maxiter=2000)


@pytest.mark.parametrize("name", NAMES)
@given(st.lists(st.floats(0.0, 1e3), min_size=1, max_size=20),
       st.one_of(st.just(0.0), st.floats(1e-300, 10.0)))
def test_radial_prox_matches_root(name, s, a):
    r = np.asarray(_kernels.get(name).radial_prox(np.asarray(s), a))
    assert np.all((r >= 0.0) & (r <= 1.0))
    if a == 0.0:
        assert np.array_equal(r, np.minimum(s, 1.0))
        return
    want = np.array([radial_oracle(v, a) for v in s])
    assert np.allclose(r, want, rtol=1e-12, atol=1e-15)


@needs_c
def test_radial_prox_backends_agree():
    s = np.random.default_rng(1).uniform(0.0, 5.0, 500)
    for a in (0.0, 1e-3, 0.1, 3.0):
        py = _kernels.get("python").radial_prox(s, a)
        cy = np.asarray(_kernels.get("cython").radial_prox(s, a))
        assert np.max(np.abs(py - cy)) <= 1e-14


@needs_c
@pytest.mark.parametrize("prob", [problems.bump2d(n=24, T=0.01), problems.plateau1d(n=50),
                                  problems.radial_annulus(n=20)],
                         ids=["bump2d", "plateau1d", "annulus"])
@pytest.mark.parametrize("mu", [0.0, 0.05])
@pytest.mark.parametrize("accelerate", [True, False])
def test_pd_backends_agree(prob, mu, accelerate):
    steps_p, arrs_p, gaps_p = run("python", prob, mu, 150, accelerate)
    steps_c, arrs_c, gaps_c = run("cython", prob, mu, 150, accelerate)
    assert steps_p == pytest.approx(steps_c, rel=1e-13)
    for a, b in zip(arrs_p, arrs_c):
        assert np.max(np.abs(a - b)) <= 1e-10 * (1.0 + np.max(np.abs(a)))
    assert gaps_p == pytest.approx(gaps_c, rel=1e-8, abs=1e-12)


@needs_c
def test_solve_backends_agree(monkeypatch):
    prob = problems.bump2d(n=16, T=0.02)
    cfg = solver.SolveConfig(tau=0.005, tol_rel=1e-6)
    out = {}
    for name in NAMES:
        monkeypatch.setattr(_kernels, "BACKEND", name)
        out[name] = solver.solve(prob, cfg)
    a, b = out["python"].u.stack(), out["cython"].u.stack()
    assert np.max(np.abs(a - b)) <= 1e-8


def test_pure_python_env_forces_numpy():
    env = dict(os.environ, LGF_PURE_PYTHON="1")
    res = subprocess.run([sys.executable, "-c", "from lgflow import _kernels; "
                          "print(_kernels.BACKEND)"], env=env, capture_output=True, text=True,
                         check=True)
    assert res.stdout.strip() == "python"


def test_get_default_is_active_backend():
    assert _kernels.get() is _kernels.BACKENDS[_kernels.BACKEND]
