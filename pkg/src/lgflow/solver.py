"""Implicit minimizing movements for linear-growth gradient flows.

Each time step minimizes over grid functions ``v``

    E(v) = f_integral(spec_mu, v) + boundary_integral(Tv, g_k, spec) + |v - u_prev|^2 / (2 tau)

with the boundary term kept in its nonsmooth relaxed form, so traces may
detach from the Dirichlet data.  Two inner solvers are available:

``primal_dual``
    Accelerated Chambolle-Pock on the saddle form built from the conjugate.
    Works for every spec including ``mu = 0``.  The returned state is
    recovered from the dual iterate, ``v = u_prev + tau div z``, so the
    discrete Euler-Lagrange equation holds to rounding and optimality is
    measured entirely by cellwise Fenchel gaps.

``newton``
    Damped Newton on a sparse Hessian for smooth integrands (``m > 0``).
    The boundary absolute value is smoothed to ``sqrt(eps^2 + d^2)`` and
    ``eps`` is driven to ``1e-9`` by continuation; ``z`` is the exact
    gradient ``D_xi f_mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from . import grid as gr
from . import lagrangian as lg
from .errors import GridMismatch, InvalidConfig, InvalidParam, NonConvergence

PRIMAL_DUAL = "primal_dual"
NEWTON = "newton"
METHODS = (PRIMAL_DUAL, NEWTON)
DEFAULT_TOL = {PRIMAL_DUAL: 1e-4, NEWTON: 1e-10}
NEWTON_EPS_START = 1e-2
NEWTON_EPS_MIN = 1e-9
NEWTON_EPS_FACTOR = 0.1
NEWTON_LEVEL_TOL = 1e-6
EPS_MACH = float(np.finfo(float).eps)
NEWTON_LEVEL_ITERS = 100


@dataclass
class Problem:
    """Cauchy-Dirichlet data on a grid.

    ``g`` may be a :class:`~lgflow.grid.BoundaryTrace` or
    :class:`~lgflow.grid.ScalarField` (constant in time), a callable
    ``t -> BoundaryTrace | ScalarField | array``, or a
    :class:`~lgflow.grid.TimeSeries` of either, linearly interpolated in time.
    """

    grid: gr.GridSpec
    T: float
    u0: gr.ScalarField
    spec: lg.LagrangianSpec
    g: Any = 0.0
    name: str = "custom"

    def __post_init__(self):
        if not self.T > 0:
            raise InvalidParam("horizon T must be positive")
        if self.u0.grid != self.grid:
            raise GridMismatch("u0 is not on the problem grid")
        if isinstance(self.g, gr.TimeSeries) and len(self.g):
            if self.g.times[0] > 0 or self.g.times[-1] < self.T:
                raise InvalidParam("boundary data stamps must cover [0, T]")

    def g_at(self, t: float) -> gr.BoundaryTrace:
        g = self.g
        if isinstance(g, gr.TimeSeries):
            k = int(np.searchsorted(g.times, t, side="right"))
            if k == 0 or k == len(g):
                return _as_trace(self.grid, g.frames[min(k, len(g) - 1)])
            t0, t1 = g.times[k - 1], g.times[k]
            w = (t - t0) / (t1 - t0)
            a = _as_trace(self.grid, g.frames[k - 1]).values
            b = _as_trace(self.grid, g.frames[k]).values
            return gr.BoundaryTrace(self.grid, (1 - w) * a + w * b)
        if callable(g) and not isinstance(g, (gr.ScalarField, gr.BoundaryTrace)):
            return _as_trace(self.grid, g(t))
        return _as_trace(self.grid, g)


def _as_trace(grid, g) -> gr.BoundaryTrace:
    if isinstance(g, gr.BoundaryTrace):
        if g.grid != grid:
            raise GridMismatch("boundary data on a different grid")
        return g
    if isinstance(g, gr.ScalarField):
        if g.grid != grid:
            raise GridMismatch("boundary data on a different grid")
        return gr.trace(g)
    return gr.BoundaryTrace(grid, g)


@dataclass(frozen=True)
class SolveConfig:
    """Time step, regularization and inner-solver controls.

    ``tol_rel`` defaults to 1e-4 for the primal-dual path (bound on the
    largest cellwise Fenchel gap and on the h-weighted total gap) and to
    1e-10 for Newton (bound on the sup norm of the energy gradient relative
    to its natural scale ``a_max / h + |v - u_prev|_inf / tau``).
    ``pd_ratio`` splits the step-size product: ``tau_pd = ratio / L``,
    ``sigma = 1 / (ratio L)``.  With acceleration the step sizes are reset
    every ``pd_restart`` iterations, which keeps the dual iterate moving
    once the primal step has shrunk.
    """

    tau: float
    mu: float = 0.0
    method: str = PRIMAL_DUAL
    max_iters: int = 50_000
    tol_rel: Optional[float] = None
    tol_abs: float = 0.0
    theta_pd: float = 1.0
    accelerate: bool = True
    pd_ratio: float = 1.0
    check_every: int = 25
    pd_restart: int = 250

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidConfig("tau must be positive")
        if self.mu < 0 or not math.isfinite(self.mu):
            raise InvalidConfig("mu must be finite and >= 0")
        if self.method not in METHODS:
            raise InvalidConfig(f"unknown inner method {self.method!r}")
        if self.max_iters < 1 or self.check_every < 1:
            raise InvalidConfig("max_iters and check_every must be positive")
        if self.tol_rel is not None and not self.tol_rel > 0:
            raise InvalidConfig("tol_rel must be positive")
        if self.tol_abs < 0:
            raise InvalidConfig("tol_abs must be >= 0")
        if not 0.0 <= self.theta_pd <= 1.0:
            raise InvalidConfig("theta_pd must lie in [0, 1]")
        if not self.pd_ratio > 0:
            raise InvalidConfig("pd_ratio must be positive")
        if self.pd_restart < 1:
            raise InvalidConfig("pd_restart must be positive")

    @property
    def tol(self) -> float:
        return self.tol_rel if self.tol_rel is not None else DEFAULT_TOL[self.method]

    def to_dict(self) -> dict:
        return {"tau": self.tau, "mu": self.mu, "method": self.method,
                "max_iters": self.max_iters, "tol_rel": self.tol, "tol_abs": self.tol_abs,
                "theta_pd": self.theta_pd, "accelerate": self.accelerate,
                "pd_ratio": self.pd_ratio, "check_every": self.check_every,
                "pd_restart": self.pd_restart}


@dataclass
class StepStats:
    k: int
    t: float
    inner_iters: int
    energy: float
    gap: float
    gap_max: float
    el_residual: float
    converged: bool = True


@dataclass
class Trajectory:
    """Frames ``u`` at ``t_k = k tau`` (``k = 0`` is ``u0``) and duals ``z`` at ``k >= 1``.

    ``z`` frames carry the boundary normal flux as their boundary extension;
    ``g`` holds the boundary data used at every stamp.
    """

    u: gr.TimeSeries
    z: List[gr.VectorField]
    g: List[gr.BoundaryTrace]
    stats: List[StepStats]
    spec: lg.LagrangianSpec
    spec_mu: lg.LagrangianSpec
    tau: float
    method: str = PRIMAL_DUAL

    @property
    def grid(self) -> gr.GridSpec:
        return self.u.grid

    @property
    def times(self) -> np.ndarray:
        return self.u.times

    @property
    def n_steps(self) -> int:
        return len(self.u) - 1


# ---------------------------------------------------------------- energies

def energy(spec: lg.LagrangianSpec, v: gr.ScalarField, g: gr.BoundaryTrace,
           boundary_spec: Optional[lg.LagrangianSpec] = None) -> float:
    """f_integral(spec, v) + boundary_integral(Tv, g)."""
    bspec = spec if boundary_spec is None else boundary_spec
    return gr.f_integral(spec, v) + gr.boundary_integral(gr.trace(v), g, bspec)


def step_energy(spec_mu, spec, v, u_prev, g, tau) -> float:
    """The functional minimized by one implicit step."""
    d = v.values - u_prev.values
    return energy(spec_mu, v, g, spec) + 0.5 / tau * gr.inner(
        gr.ScalarField(v.grid, d), gr.ScalarField(v.grid, d))


# ---------------------------------------------------------------- operator data

class _StepData:
    """Grid-level arrays shared by all steps of one solve."""

    def __init__(self, grid: gr.GridSpec, spec_mu: lg.LagrangianSpec, spec: lg.LagrangianSpec):
        self.grid = grid
        self.shape2 = grid.cells if grid.dim == 2 else (grid.cells[0], 1)
        a = gr.cell_axis_scale(spec_mu, grid) * np.moveaxis(grid.owned_faces, 0, -1)
        self.a_cell = gr.cell_axis_scale(spec_mu, grid)
        self.ax = np.ascontiguousarray(a[..., 0].reshape(self.shape2))
        self.ay = (np.ascontiguousarray(a[..., 1]) if grid.dim == 2
                   else np.zeros(self.shape2))
        b = grid.boundary
        self.bcell = np.ascontiguousarray(b.cell, dtype=np.int64)
        self.bc = np.ascontiguousarray(gr.boundary_weights(spec, grid))
        self.m = spec_mu.m
        amax = float(np.max(a)) if a.size else 0.0
        self.amax = amax
        n = grid.dim
        self.L = math.sqrt(4 * n * amax ** 2 + 2 * n) / grid.h
        self._k1 = None
        self.hpat = None

    def to2(self, v):
        return np.ascontiguousarray(np.asarray(v, dtype=float).reshape(self.shape2))

    def field(self, v2) -> gr.ScalarField:
        return gr.ScalarField(self.grid, v2.reshape(self.grid.cells))

    def dual_field(self, px, py, zb) -> gr.VectorField:
        g = self.grid
        p = np.stack([px.reshape(g.cells), py.reshape(g.cells)][: g.dim], axis=-1)
        return gr.VectorField.from_cell_vectors(g, self.a_cell * p, boundary=zb)

    # sparse pieces for Newton
    def k1(self):
        if self._k1 is None:
            g = self.grid
            n = int(np.prod(g.cells))
            idx = np.arange(n).reshape(g.cells)
            blocks = []
            for a in range(g.dim):
                w = (self.ax if a == 0 else self.ay).reshape(g.cells)
                own = g.owned_faces[a]
                c0 = idx[own]
                c1 = c0 + (g.cells[1] if (g.dim == 2 and a == 0) else 1)
                wa = w[own] / g.h
                rows = np.concatenate([c0, c0])
                cols = np.concatenate([c0, c1])
                vals = np.concatenate([-wa, wa])
                blocks.append(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))
            self._k1 = blocks
        return self._k1


# ---------------------------------------------------------------- steps

def step(u_prev: gr.ScalarField, g_k: gr.BoundaryTrace, prob: Problem, cfg: SolveConfig,
         warm: Optional[dict] = None, _data: Optional[_StepData] = None, k: int = 1):
    """One implicit step; returns ``(u_next, z_next, stat)``.

    ``warm`` is a dict carrying solver state between steps (updated in place).

    Raises
    ------
    InvalidConfig
        Newton requested for a nonsmooth integrand.
    NonConvergence
        ``max_iters`` reached; ``best`` holds ``(u, z, stat)``.
    """
    spec_mu = lg.with_mu(prob.spec, cfg.mu)
    if cfg.method == NEWTON and not spec_mu.is_smooth:
        raise InvalidConfig("newton needs a smooth integrand: set mu > 0 or use area")
    if u_prev.grid != prob.grid:
        raise GridMismatch("u_prev is not on the problem grid")
    data = _data or _StepData(prob.grid, spec_mu, prob.spec)
    warm = {} if warm is None else warm
    if cfg.method == PRIMAL_DUAL:
        return _step_pd(u_prev, g_k, prob, cfg, spec_mu, data, warm, k)
    return _step_newton(u_prev, g_k, prob, cfg, spec_mu, data, warm, k)


def _step_pd(u_prev, g_k, prob, cfg, spec_mu, data, warm, k):
    kern = _kernels.get()
    g = prob.grid
    up = data.to2(u_prev.values)
    bg = np.ascontiguousarray(g_k.values, dtype=float)
    if "x" not in warm:
        warm.update(x=up.copy(), px=np.zeros(data.shape2), py=np.zeros(data.shape2),
                    q=np.zeros(g.n_boundary))
    x, px, py, q = warm["x"], warm["px"], warm["py"], warm["q"]
    xb = x.copy()
    tau0 = cfg.pd_ratio / data.L
    sigma0 = 1.0 / (cfg.pd_ratio * data.L)
    sigma, tau_pd = sigma0, tau0
    since = 0
    tol = cfg.tol_abs + cfg.tol
    vol = g.cell_volume
    v = np.empty(data.shape2)
    it = 0
    gmax = gsum = math.inf
    while True:
        gmax, gcell, gbnd = kern.pd_gap(up, data.ax, data.ay, data.bcell, data.bc, bg,
                                        data.m, cfg.tau, g.h, px, py, q, v)
        gsum = vol * (gcell + gbnd)
        if (gmax <= tol and gsum <= tol) or it >= cfg.max_iters:
            break
        n = min(cfg.check_every, cfg.max_iters - it)
        if cfg.accelerate and since >= cfg.pd_restart:
            sigma, tau_pd, since = sigma0, tau0, 0
        sigma, tau_pd = kern.pd_run(up, data.ax, data.ay, data.bcell, data.bc, bg, data.m,
                                    cfg.tau, g.h, x, xb, px, py, q, sigma, tau_pd, n,
                                    cfg.accelerate, cfg.theta_pd)
        it += n
        since += n
    u_next = data.field(v)
    z = data.dual_field(px, py, -q.copy())
    stat = StepStats(k, k * cfg.tau, it, energy(spec_mu, u_next, g_k, prob.spec), gsum, gmax, 0.0,
                     converged=bool(gmax <= tol and gsum <= tol))
    if not stat.converged:
        raise NonConvergence(f"primal-dual did not reach gap {tol:g} in {it} iterations "
                             f"(max gap {gmax:.3g}, total {gsum:.3g})", best=(u_next, z, stat))
    return u_next, z, stat


def _newton_pieces(v, up, bg, data, tau, eps):
    """Energy / h^n, gradient and Hessian of the smoothed step functional."""
    g = data.grid
    blocks = data.k1()
    ys = [B @ v for B in blocks]
    f = np.sqrt(data.m ** 2 + sum(y * y for y in ys))
    d = v[data.bcell] - bg
    s = np.sqrt(eps * eps + d * d)
    cb = data.bc / g.h
    e = float(np.sum(f) + np.sum(cb * s) + 0.5 / tau * np.sum((v - up) ** 2))
    grad = sum(B.T @ (y / f) for B, y in zip(blocks, ys))
    grad = grad + np.bincount(data.bcell, weights=cb * d / s, minlength=v.size) + (v - up) / tau
    return e, grad, ys, f, d, s


def _newton_delta(v, dv, up, bg, data, tau, eps):
    """E(v + dv) - E(v) for the smoothed functional.

    Differences are formed from ``dv`` directly so that the result stays
    accurate when it is far smaller than the energy itself.
    """
    blocks = data.k1()
    y0 = [B @ v for B in blocks]
    dy = [B @ dv for B in blocks]
    f0 = np.sqrt(data.m ** 2 + sum(y * y for y in y0))
    f1 = np.sqrt(data.m ** 2 + sum((a + b) ** 2 for a, b in zip(y0, dy)))
    df = sum(b * (2.0 * a + b) for a, b in zip(y0, dy)) / (f0 + f1)
    d0 = v[data.bcell] - bg
    dd = dv[data.bcell]
    s0 = np.sqrt(eps * eps + d0 * d0)
    s1 = np.sqrt(eps * eps + (d0 + dd) ** 2)
    cb = data.bc / data.grid.h
    ds = cb * dd * (2.0 * d0 + dd) / (s0 + s1)
    dq = dv * (dv + 2.0 * (v - up)) * (0.5 / tau)
    return float(np.sum(df) + np.sum(ds) + np.sum(dq))


class _HessianPattern:
    """Fixed CSR pattern of ``I/tau + sum_ab K_a^T W_ab K_b + diag`` for fast refills."""

    def __init__(self, data: "_StepData", n: int):
        blocks = data.k1()
        rows, cols, self.terms = [], [], []
        for a, Ba in enumerate(blocks):
            Ba = Ba.tocoo()
            for b, Bb in enumerate(blocks):
                Bb = Bb.tocsr()
                # (K_a^T W K_b)_{ij} = sum_r Ka[r, i] w[r] Kb[r, j]
                ra, ia, va = Ba.row, Ba.col, Ba.data
                rb = Bb.indptr
                cnt = np.diff(rb)[ra]
                rr = np.repeat(ra, cnt)
                ii = np.repeat(ia, cnt)
                vv = np.repeat(va, cnt)
                starts = np.repeat(rb[ra], cnt)
                offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
                jj = Bb.indices[starts + offs]
                coef = vv * Bb.data[starts + offs]
                rows.append(ii)
                cols.append(jj)
                self.terms.append((a, b, rr, coef))
        diag = np.arange(n)
        rows.append(diag)
        cols.append(diag)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        key = rows * n + cols
        uniq, self.slot = np.unique(key, return_inverse=True)
        self.n = n
        self.nnz = uniq.size
        self.rows = uniq // n
        self.cols = uniq % n
        self.diag_slot = self.slot[-n:]
        self.csc_order = np.lexsort((self.rows, self.cols))

    def build(self, weights, diag) -> sp.csc_matrix:
        """``weights[a][b]`` per face row; ``diag`` per cell."""
        vals = [coef * weights[a][b][rr] for a, b, rr, coef in self.terms]
        vals.append(diag)
        data = np.bincount(self.slot, weights=np.concatenate(vals), minlength=self.nnz)
        H = sp.csc_matrix((data[self.csc_order], (self.rows[self.csc_order],
                                                   self.cols[self.csc_order])),
                          shape=(self.n, self.n))
        return H


def _newton_direction(ys, f, d, q, s, grad, data, tau, eps, n):
    """Newton direction with the boundary multiplier ``q`` linearized separately.

    The smoothed relation ``s q = c d`` is linearized in ``(v, q)`` and ``q``
    is eliminated face by face; the reduced matrix stays symmetric positive
    definite while ``|q| <= c``.  Returns ``(dv, dq)``.
    """
    if data.hpat is None:
        data.hpat = _HessianPattern(data, n)
    dim = len(ys)
    inv_f = 1.0 / f
    inv_f3 = inv_f ** 3
    W = [[(inv_f if a == b else 0.0) - ys[a] * ys[b] * inv_f3 for b in range(dim)]
         for a in range(dim)]
    c = data.bc
    h = data.grid.h
    wq = np.maximum(c - q * d / s, 0.0) / s
    rq = s * q - c * d
    diag = np.full(n, 1.0 / tau) + np.bincount(data.bcell, weights=wq / h, minlength=n)
    H = data.hpat.build(W, diag)
    # the primal gradient uses c d / s; swap in q for the coupled system
    rv = grad + np.bincount(data.bcell, weights=(q - c * d / s) / h, minlength=n)
    rhs = -rv + np.bincount(data.bcell, weights=rq / s / h, minlength=n)
    dv = spla.splu(H, permc_spec="MMD_AT_PLUS_A").solve(rhs)
    dq = (wq * s * dv[data.bcell] - rq) / s
    return dv, dq


def _step_newton(u_prev, g_k, prob, cfg, spec_mu, data, warm, k):
    g = prob.grid
    up = u_prev.values.reshape(-1).astype(float)
    bg = np.asarray(g_k.values, dtype=float)
    v = warm["v"].copy() if warm.get("v") is not None else up.copy()
    c = data.bc
    if warm.get("q") is not None:
        q = warm["q"].copy()
    else:
        d0 = v[data.bcell] - bg
        q = c * d0 / np.sqrt(NEWTON_EPS_START ** 2 + d0 * d0)
    n = v.size
    tol = cfg.tol_abs + cfg.tol
    eps = warm.get("eps", NEWTON_EPS_START)
    total = 0
    gnorm = math.inf
    while True:
        for _ in range(min(cfg.max_iters, NEWTON_LEVEL_ITERS)):
            e, grad, ys, f, d, s = _newton_pieces(v, up, bg, data, cfg.tau, eps)
            # gradient entries are sums of terms of size a/h and |v - u_prev|/tau
            gscale = data.amax / g.h + float(np.max(np.abs(v - up))) / cfg.tau + 1.0
            # c d / sqrt(eps^2 + d^2) cannot be resolved below the rounding of d
            floor = np.bincount(data.bcell, minlength=n, weights=(
                c / g.h * 4.0 * EPS_MACH * (np.abs(bg) + np.abs(v[data.bcell])) / s))
            gnorm = float(np.max(np.maximum(np.abs(grad) - floor, 0.0))) / gscale
            last = eps <= NEWTON_EPS_MIN
            if gnorm <= (tol if last else max(tol, NEWTON_LEVEL_TOL)):
                break
            dv, dq = _newton_direction(ys, f, d, q, s, grad, data, cfg.tau, eps, n)
            slope = float(grad @ dv)
            if slope >= 0:
                dv, dq, slope = -grad, np.zeros_like(q), -float(grad @ grad)
            alpha = 1.0
            while alpha > 1e-12:
                if _newton_delta(v, alpha * dv, up, bg, data, cfg.tau, eps) <= 1e-4 * alpha * slope:
                    break
                alpha *= 0.5
            vn = v + alpha * dv
            # multiplier step: stay inside the box |q| <= c
            with np.errstate(divide="ignore", invalid="ignore"):
                lim = np.where(dq > 0, (c - q) / dq, np.where(dq < 0, (-c - q) / dq, np.inf))
            beta = min(1.0, 0.99 * float(np.min(lim))) if lim.size else 1.0
            q = np.clip(q + max(beta, 0.0) * dq, -c, c)
            total += 1
            if np.max(np.abs(vn - v)) == 0.0:
                break
            v = vn
        if eps <= NEWTON_EPS_MIN:
            break
        eps = max(eps * NEWTON_EPS_FACTOR, NEWTON_EPS_MIN)
    warm["v"] = v
    warm["q"] = q
    warm["eps"] = eps
    u_next = gr.ScalarField(g, v.reshape(g.cells))
    xi = gr.cell_gradient(u_next)
    zcell = lg.grad(spec_mu, g.centers, xi)
    d = v[data.bcell] - bg
    zb = -c * d / np.sqrt(eps * eps + d * d)
    z = gr.VectorField.from_cell_vectors(g, zcell * np.moveaxis(g.owned_faces, 0, -1), boundary=zb)
    el = _el_residual(u_prev, u_next, z, cfg.tau)
    stat = StepStats(k, k * cfg.tau, total, energy(spec_mu, u_next, g_k, prob.spec), 0.0, 0.0, el,
                     converged=bool(gnorm <= tol))
    if not stat.converged:
        raise NonConvergence(f"newton stalled at gradient norm {gnorm:.3g} (tol {tol:g})",
                             best=(u_next, z, stat))
    return u_next, z, stat


def _el_residual(u_prev, u_next, z, tau) -> float:
    r = (u_next.values - u_prev.values) / tau - gr.divergence(z).values
    return gr.norm_l2(gr.ScalarField(u_next.grid, r))


# ---------------------------------------------------------------- trajectories

def solve(prob: Problem, cfg: SolveConfig, progress: Optional[Callable] = None) -> Trajectory:
    """Run ``ceil(T / tau)`` implicit steps from ``u0``.

    Raises
    ------
    NonConvergence
        With ``step_index`` set and ``best`` holding the partial trajectory
        (including the best iterate of the failing step).
    """
    spec_mu = lg.with_mu(prob.spec, cfg.mu)
    if cfg.method == NEWTON and not spec_mu.is_smooth:
        raise InvalidConfig("newton needs a smooth integrand: set mu > 0 or use area")
    K = int(math.ceil(prob.T / cfg.tau - 1e-12))
    data = _StepData(prob.grid, spec_mu, prob.spec)
    frames = [prob.u0]
    zs, gs, stats = [], [prob.g_at(0.0)], []
    warm: dict = {}
    u = prob.u0
    for k in range(1, K + 1):
        gk = prob.g_at(k * cfg.tau)
        try:
            u, z, stat = step(u, gk, prob, cfg, warm, data, k)
        except NonConvergence as exc:
            u, z, stat = exc.best
            frames.append(u)
            zs.append(z)
            gs.append(gk)
            stats.append(stat)
            partial = _trajectory(frames, zs, gs, stats, prob, spec_mu, cfg)
            raise NonConvergence(f"step {k}: {exc}", best=partial, step_index=k) from exc
        if cfg.method == PRIMAL_DUAL:
            stat.el_residual = _el_residual(frames[-1], u, z, cfg.tau)
        frames.append(u)
        zs.append(z)
        gs.append(gk)
        stats.append(stat)
        if progress is not None:
            progress(stat)
    return _trajectory(frames, zs, gs, stats, prob, spec_mu, cfg)


def _trajectory(frames, zs, gs, stats, prob, spec_mu, cfg):
    times = np.arange(len(frames)) * cfg.tau
    return Trajectory(gr.TimeSeries(times, frames), zs, gs, stats, prob.spec, spec_mu,
                      cfg.tau, cfg.method)


def l2_space_time(a: gr.TimeSeries, b: Optional[gr.TimeSeries] = None, tau: Optional[float] = None) -> float:
    """Discrete L2(Omega_T) norm of ``a - b`` over stamps ``k >= 1`` (backward rectangle rule)."""
    va = a.stack()
    vb = 0.0 if b is None else b.stack()
    d = (va - vb)[1:]
    dt = np.diff(a.times) if tau is None else np.full(len(d), tau)
    act = a.grid.active
    per = np.array([np.sum(x * x * act) for x in d]) * a.grid.cell_volume
    return float(math.sqrt(max(np.sum(per * dt), 0.0)))


@dataclass
class StabilityReport:
    mus: List[float]
    distances: List[float]
    max_dual_norm: List[float]
    conjugate_violation: List[float]
    mu_gap_min: List[float]
    mu_gap_max: List[float]
    measure: float
    certificates: List[dict] = field(default_factory=list)
    trajectories: List[Trajectory] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"mus": self.mus, "distances": self.distances,
                "max_dual_norm": self.max_dual_norm,
                "conjugate_violation": self.conjugate_violation,
                "mu_gap_min": self.mu_gap_min, "mu_gap_max": self.mu_gap_max,
                "measure": self.measure, "certificates": self.certificates}


def stability_sweep(prob: Problem, mus, cfg: SolveConfig, certify_steps: bool = True,
                    executor=None) -> StabilityReport:
    """Solve for each ``mu`` and report the Cauchy trend of ``u_mu``.

    Dual fields are measured against the unregularized integrand: the
    largest ``|A^-1 z|`` and the largest value of ``f*(x, z)``.
    ``executor`` (a ``concurrent.futures`` executor) runs members in parallel.
    """
    mus = [float(m) for m in mus]
    if not mus or min(mus) <= 0 or any(b >= a for a, b in zip(mus, mus[1:])):
        raise InvalidParam("mus must be positive and strictly decreasing")
    cfgs = [replace(cfg, mu=m) for m in mus]
    if executor is None:
        trajs = [solve(prob, c) for c in cfgs]
    else:
        trajs = list(executor.map(solve, [prob] * len(cfgs), cfgs))
    g = prob.grid
    base = prob.spec.base
    a = gr.cell_axis_scale(base, g)
    dists = [l2_space_time(t1.u, t2.u, cfg.tau) for t1, t2 in zip(trajs, trajs[1:])]
    dual, viol, gmin, gmax, certs = [], [], [], [], []
    for m, tr in zip(mus, trajs):
        norms, conj = [], []
        for z in tr.z:
            zc = gr.cell_vectors(z)
            s2 = np.sum((zc / a) ** 2, axis=-1)[g.active]
            norms.append(float(np.sqrt(s2.max())))
            conj.append(float(np.max(lg._conj_from_s2(base.m, s2))))
        dual.append(max(norms))
        viol.append(max(conj))
        gaps = [gr.f_integral(tr.spec_mu, u) - gr.f_integral(base, u) for u in tr.u.frames[1:]]
        gmin.append(float(min(gaps)))
        gmax.append(float(max(gaps)))
        if certify_steps:
            from . import certify

            rep = certify.check_subgradient(tr, tr.spec_mu)
            certs.append({"mu": m, "subgradient": rep.residual, "pass": rep.passed})
    return StabilityReport(mus, dists, dual, viol, gmin, gmax, g.measure, certs, trajs)
