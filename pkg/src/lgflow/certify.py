"""Certificate checks of discrete trajectories against the weak-solution conditions.

All residuals are divided by the problem scale

    N = |u|_{L2(Omega_T)} + |g|_{L2(bdry x (0,T))} + 1

so tolerances are dimensionless.  Time sums pair the backward-Euler stamps
of the scheme: terms carrying ``u`` against a time derivative use stamps
``0..K-1`` with forward differences, all other terms use stamps ``1..K``.
With this pairing the divergence, variational and intermediate conditions
hold for an exact minimizing-movement trajectory up to solver error, so any
residual above tolerance is a genuine defect.

The test-function checks can only falsify: a pass means that no
counterexample was found among the functions tried.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import grid as gr
from . import lagrangian as lg
from . import mollify as mo
from .errors import InvalidParam, MissingDual, NotDifferentiable, ShapeMismatch

CANONICAL_VERSION = "1"
TOL_FIRST_ORDER = 1e-3
TOL_NEWTON = 1e-6
TOL_INIT = 1e-3
# conditions whose discrete residual is O(tau + h) rather than solver-limited
DISCRETIZATION_CONST = 1.0


# ---------------------------------------------------------------- reports

@dataclass
class ConditionResult:
    condition: str
    residual: float
    tol: float
    witness: Dict = field(default_factory=dict)
    note: str = ""
    extra: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tol)

    def to_dict(self) -> dict:
        out = {"condition": self.condition, "residual": _num(self.residual),
               "tol": _num(self.tol), "pass": self.passed,
               "witness": {"k": self.witness.get("k"), "cell": self.witness.get("cell"),
                           "phi_id": self.witness.get("phi_id")}}
        if self.note:
            out["note"] = self.note
        if self.extra:
            out["extra"] = {k: _jsonable(v) for k, v in self.extra.items()}
        return out


@dataclass
class CertificateReport:
    results: List[ConditionResult]
    header: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name) -> ConditionResult:
        for r in self.results:
            if r.condition == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"header": {k: _jsonable(v) for k, v in self.header.items()},
                "pass": self.passed, "conditions": [r.to_dict() for r in self.results]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else ("inf" if x > 0 else ("-inf" if x < 0 else "nan"))


def _jsonable(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(a) for a in v]
    if isinstance(v, (float, np.floating)):
        return _num(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, dict):
        return {k: _jsonable(a) for k, a in v.items()}
    return v


# ---------------------------------------------------------------- test functions

@dataclass
class TestFunction:
    phi_id: str
    kind: str            # "interior" (zero trace) or "boundary"
    values: np.ndarray   # (K + 1, *cells)


def _hat(r, R):
    """C^1 smoothed hat cos^2(pi r / 2R) on |r| < R."""
    r = np.abs(r)
    return np.where(r < R, np.cos(0.5 * np.pi * r / R) ** 2, 0.0)


def _time_hat(t, a, b):
    w = np.zeros_like(t)
    on = (t > a) & (t < b)
    w[on] = np.sin(np.pi * (t[on] - a) / (b - a)) ** 2
    return w


@dataclass(frozen=True)
class TestFunctionFamily:
    """Space-time test functions: a versioned canonical set plus seeded random bumps.

    Every function vanishes at the first and last stamp and has sup norm at
    most 1.  ``interior`` functions also vanish on every boundary-adjacent
    cell, so their trace is zero.  ``kinds`` restricts the generated kinds.
    """

    count: int = 16
    seed: int = 0
    canonical: bool = True
    kinds: Tuple[str, ...] = ("interior", "boundary")

    def __post_init__(self):
        if self.count < 0:
            raise InvalidParam("count must be >= 0")
        bad = set(self.kinds) - {"interior", "boundary"}
        if bad:
            raise InvalidParam(f"unknown test-function kinds {sorted(bad)}")

    def generate(self, grid: gr.GridSpec, times) -> List[TestFunction]:
        times = np.asarray(times, dtype=float)
        T = float(times[-1])
        X = grid.centers
        act = grid.active
        inner = act.copy()
        inner.reshape(-1)[grid.boundary.cell] = False
        pts = X[act]
        lo, hi = pts.min(axis=0) - 0.5 * grid.h, pts.max(axis=0) + 0.5 * grid.h
        ext = float(np.max(hi - lo))

        def nearest_active(p):
            i = int(np.argmin(np.sum((pts - p) ** 2, axis=-1)))
            return pts[i]

        def bump(c, R, a, b, amp, kind):
            sp_ = np.ones(grid.cells)
            for ax in range(grid.dim):
                sp_ = sp_ * _hat(X[..., ax] - c[ax], R)
            sp_ = sp_ * (inner if kind == "interior" else act)
            tw = _time_hat(times, a, b)
            return amp * tw.reshape((-1,) + (1,) * grid.dim) * sp_

        out = []
        if self.canonical:
            mid = nearest_active(0.5 * (lo + hi))
            off = nearest_active(lo + 0.3 * (hi - lo))
            edge = nearest_active(np.array([lo[0]] + list(0.5 * (lo + hi)[1:])))
            canon = [
                ("c1-interior-centre+", mid, 0.3 * ext, 0.0, T, 1.0, "interior"),
                ("c1-interior-centre-", mid, 0.3 * ext, 0.0, T, -1.0, "interior"),
                ("c1-interior-offset+", off, 0.2 * ext, 0.25 * T, 0.75 * T, 1.0, "interior"),
                ("c1-boundary-low+", edge, 0.3 * ext, 0.0, T, 1.0, "boundary"),
                ("c1-boundary-low-", edge, 0.3 * ext, 0.0, T, -1.0, "boundary"),
                ("c1-global+", mid, 4.0 * ext, 0.0, T, 1.0, "boundary"),
                ("c1-global-", mid, 4.0 * ext, 0.0, T, -1.0, "boundary"),
            ]
            for pid, c, R, a, b, amp, kind in canon:
                if kind in self.kinds:
                    out.append(TestFunction(pid, kind, bump(c, R, a, b, amp, kind)))
        rng = np.random.default_rng(self.seed)
        for i in range(self.count):
            kind = self.kinds[i % len(self.kinds)]
            c = lo + rng.uniform(0.0, 1.0, grid.dim) * (hi - lo)
            if kind == "boundary":
                ax = int(rng.integers(grid.dim))
                c[ax] = lo[ax] if rng.uniform() < 0.5 else hi[ax]
            R = rng.uniform(0.1, 0.4) * ext
            a = rng.uniform(0.0, 0.5) * T
            b = a + rng.uniform(0.25, 1.0) * (T - a)
            amp = rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 1.0)
            vals = bump(c, R, a, b, amp, kind)
            out.append(TestFunction(f"r{self.seed}-{i}-{kind}", kind, vals))
        return out


# ---------------------------------------------------------------- trajectory arrays

class _Arrays:
    """Stacked arrays of a trajectory used by every check."""

    def __init__(self, traj, need_z=False):
        g = traj.grid
        self.grid = g
        self.tau = float(traj.tau)
        self.times = traj.times
        self.K = traj.n_steps
        self.u = traj.u.stack()
        self.act = g.active
        self.vol = g.cell_volume
        self.area = g.face_area
        self.xi_u = gr.cell_gradient_values(g, self.u)
        self.Tu = self.u.reshape(self.K + 1, -1)[:, g.boundary.cell]
        self.gb = np.stack([t.values for t in traj.g])
        self.cb = gr.boundary_weights(traj.spec, g)
        self.spec = traj.spec
        self.spec_mu = traj.spec_mu
        self.has_z = bool(traj.z) and len(traj.z) == self.K
        if need_z and not self.has_z:
            raise MissingDual("trajectory carries no dual field")
        if self.has_z:
            self.zc = np.stack([gr.cell_vectors(z) for z in traj.z])
        u2 = np.sum(self.u[1:] ** 2 * self.act, axis=tuple(range(1, g.dim + 1))) * self.vol
        g2 = np.sum(self.gb[1:] ** 2, axis=1) * self.area
        self.N = math.sqrt(self.tau * u2.sum()) + math.sqrt(self.tau * g2.sum()) + 1.0

    def F(self, spec, vals) -> np.ndarray:
        """f_integral per stamp for stacked values (..., *cells)."""
        xi = gr.cell_gradient_values(self.grid, vals)
        return np.sum(lg.evaluate(spec, self.grid.centers, xi) * self.act,
                      axis=tuple(range(-self.grid.dim, 0))) * self.vol

    def Bnd(self, tvals, gvals) -> np.ndarray:
        return np.sum(np.abs(tvals - gvals) * self.cb, axis=-1) * self.area

    def dot(self, a, b) -> np.ndarray:
        """Per-stamp h-weighted L2 products of stacked cell fields."""
        return np.sum(a * b * self.act, axis=tuple(range(-self.grid.dim, 0))) * self.vol


def default_tol(traj) -> float:
    return TOL_NEWTON if traj.method == "newton" else TOL_FIRST_ORDER


def problem_scale(traj) -> float:
    return _Arrays(traj).N


# ---------------------------------------------------------------- checks

def check_subgradient(traj, spec: Optional[lg.LagrangianSpec] = None,
                      tol: Optional[float] = None) -> ConditionResult:
    """max over cells and stamps of fenchel_gap(spec, x, grad u, z) / N."""
    A = _Arrays(traj, need_z=True)
    spec = spec or A.spec_mu
    gap = lg.fenchel_gap(spec, A.grid.centers, A.xi_u[1:], A.zc)
    gap = np.where(A.act, gap, -np.inf)
    idx = np.unravel_index(int(np.argmax(gap)), gap.shape)
    res = float(gap[idx]) / A.N
    return ConditionResult("subgradient", res, default_tol(traj) if tol is None else tol,
                           {"k": int(idx[0]) + 1, "cell": [int(i) for i in idx[1:]]})


def _divergence_lhs_rhs(A: _Arrays, phi: np.ndarray):
    """Both sides of the divergence inequality for one test function."""
    xi_phi = gr.cell_gradient_values(A.grid, phi)
    zterm = A.tau * np.sum(A.dot(np.sum(A.zc * xi_phi[1:], axis=-1), 1.0))
    uterm = np.sum(A.dot(A.u[:-1], phi[1:] - phi[:-1]))
    Tphi = phi.reshape(A.K + 1, -1)[:, A.grid.boundary.cell]
    d = A.gb[1:] - A.Tu[1:]
    rhs = A.tau * np.sum((np.abs(Tphi[1:] + d) - np.abs(d)) * A.cb) * A.area
    return zterm - uterm, rhs


def _check_phis(phis, A: _Arrays):
    for p in phis:
        if p.values.shape != (A.K + 1,) + A.grid.cells:
            raise ShapeMismatch(f"test function {p.phi_id} has shape {p.values.shape}")
        if np.any(p.values[0] != 0) or np.any(p.values[-1] != 0):
            raise InvalidParam(f"test function {p.phi_id} is not compactly supported in time")


def check_divergence_condition(traj, fam: TestFunctionFamily,
                               tol: Optional[float] = None,
                               phis: Optional[Sequence[TestFunction]] = None) -> ConditionResult:
    """max over phi of (LHS - RHS) / N for the one-sided divergence inequality."""
    A = _Arrays(traj, need_z=True)
    phis = fam.generate(A.grid, A.times) if phis is None else list(phis)
    _check_phis(phis, A)
    worst, wid = -math.inf, None
    for p in phis:
        lhs, rhs = _divergence_lhs_rhs(A, p.values)
        r = (lhs - rhs) / A.N
        if r > worst:
            worst, wid = r, p.phi_id
    if not phis:
        worst = 0.0
    return ConditionResult("divergence", worst, default_tol(traj) if tol is None else tol,
                           {"phi_id": wid}, note=f"no counterexample found ({len(phis)} phi)")


def check_pairing_condition(traj, fam: TestFunctionFamily, tol: Optional[float] = None,
                            phis: Optional[Sequence[TestFunction]] = None) -> ConditionResult:
    """max over interior phi of |int phi f(Du) + int phi f*(z) - 1/2 int u^2 d_t phi + int u z.grad phi| / N.

    The residual is O(tau + h) for the discrete scheme; the default
    tolerance is ``tol_cert + (tau + h)``.
    """
    A = _Arrays(traj, need_z=True)
    if phis is None:
        phis = TestFunctionFamily(fam.count, fam.seed, fam.canonical, ("interior",)).generate(
            A.grid, A.times)
    phis = list(phis)
    _check_phis(phis, A)
    bcells = A.grid.boundary.cell
    spec = A.spec_mu
    fu = lg.evaluate(spec, A.grid.centers, A.xi_u[1:])
    fs = lg.conjugate(spec, A.grid.centers, A.zc)
    worst, wid = 0.0, None
    for p in phis:
        if p.kind != "interior" or np.any(p.values.reshape(A.K + 1, -1)[:, bcells] != 0):
            raise InvalidParam(f"pairing check needs interior test functions ({p.phi_id})")
        phi = p.values
        xi_phi = gr.cell_gradient_values(A.grid, phi)
        a = A.tau * np.sum(A.dot(phi[1:], fu))
        b = A.tau * np.sum(A.dot(phi[1:], fs)) if np.all(np.isfinite(fs[phi[1:] != 0])) else math.inf
        c = 0.5 * np.sum(A.dot(A.u[:-1] ** 2, phi[1:] - phi[:-1]))
        d = A.tau * np.sum(A.dot(A.u[1:], np.sum(A.zc * xi_phi[1:], axis=-1)))
        r = abs(a + b - c + d) / A.N
        if r > worst or wid is None:
            worst, wid = r, p.phi_id
    base = default_tol(traj) if tol is None else tol
    disc = DISCRETIZATION_CONST * (A.tau + A.grid.h) if tol is None else 0.0
    return ConditionResult("pairing", worst, base + disc, {"phi_id": wid},
                           note=f"no counterexample found ({len(phis)} phi)")


def initial_condition_curve(traj, u0: Optional[gr.ScalarField] = None):
    """``[(s, r(s))]`` for ``s`` in ``T/8, T/16, T/32`` with
    ``r(s) = (1/s) sum_{0 < t_k <= s} tau |u_k - u0|^2``.

    Values of ``s`` below the first stamp are dropped (the test is
    tau-limited there).
    """
    A = _Arrays(traj)
    u0v = traj.u.frames[0].values if u0 is None else u0.values
    T = float(A.times[-1])
    d2 = A.dot(A.u - u0v, A.u - u0v)
    out = []
    for j in (8, 16, 32):
        s = T / j
        sel = (A.times > 0) & (A.times <= s * (1 + 1e-12))
        if sel.any():
            out.append((s, float(A.tau * np.sum(d2[sel]) / s)))
    return out, A.N


def check_initial_condition(traj, u0: Optional[gr.ScalarField] = None,
                            tol: Optional[float] = None) -> ConditionResult:
    """r(s) must be non-increasing and r at the smallest testable s at most ``tol`` (times N^2).

    The default tolerance adds the discretization allowance ``tau + h``.
    """
    curve, N = initial_condition_curve(traj, u0)
    tol_ = (TOL_INIT + DISCRETIZATION_CONST * (traj.tau + traj.grid.h)) if tol is None else tol
    if not curve:
        return ConditionResult("initial", 0.0, tol_, note="tau-limited: no stamp below T/8")
    vals = [r for _, r in curve]
    # the curve must not grow as s shrinks (tiny slack for rounding)
    increase = max([b - a for a, b in zip(vals, vals[1:])] + [0.0])
    res = vals[-1] / N ** 2
    if increase > 1e-12 * (1.0 + vals[0]):
        res = max(res, math.inf)
    note = f"smallest testable s = {curve[-1][0]:.6g}"
    return ConditionResult("initial", res, tol_, {"k": None},
                           note=note, extra={"s": [s for s, _ in curve], "r": vals})


def _series_values(v, A: _Arrays) -> np.ndarray:
    vals = v.stack() if isinstance(v, gr.TimeSeries) else np.asarray(v, dtype=float)
    if vals.shape != (A.K + 1,) + A.grid.cells:
        raise ShapeMismatch(f"comparison map shape {vals.shape} != {(A.K + 1,) + A.grid.cells}")
    return vals * A.act


def _variational_sides(A: _Arrays, v: np.ndarray, zform: bool):
    """Cumulative LHS and RHS at every stamp m = 1..K."""
    spec = A.spec_mu
    Tv = v.reshape(A.K + 1, -1)[:, A.grid.boundary.cell]
    lhs_k = A.F(spec, A.u[1:]) + A.Bnd(A.Tu[1:], A.gb[1:])
    if zform:
        fs = lg.conjugate(spec, A.grid.centers, A.zc)
        lhs_k = lhs_k + A.dot(fs, 1.0)
        xi_v = gr.cell_gradient_values(A.grid, v[1:])
        rhs_k = A.dot(np.sum(A.zc * xi_v, axis=-1), 1.0)
    else:
        rhs_k = A.F(spec, v[1:])
    rhs_k = rhs_k + A.Bnd(Tv[1:], A.gb[1:])
    dv = v[1:] - v[:-1]
    mix = A.dot(dv, v[1:] - A.u[1:])
    d0 = v[0] - A.u[0]
    dm = v[1:] - A.u[1:]
    lhs = A.tau * np.cumsum(lhs_k)
    rhs = (A.tau * np.cumsum(rhs_k) + np.cumsum(mix) + 0.5 * A.dot(d0, d0)
           - 0.5 * A.dot(dm, dm))
    return lhs, rhs


def _check_maps(name, traj, maps, zform, tol):
    A = _Arrays(traj, need_z=zform)
    if maps is None:
        maps = default_comparison_maps(traj)
    worst, wit = -math.inf, {}
    per = {}
    for mid, v in maps:
        lhs, rhs = _variational_sides(A, _series_values(v, A), zform)
        r = (lhs - rhs) / A.N
        k = int(np.argmax(r))
        per[mid] = float(r[k])
        if r[k] > worst:
            worst, wit = float(r[k]), {"k": k + 1, "phi_id": mid}
    if not maps:
        worst = 0.0
    return ConditionResult(name, worst, default_tol(traj) if tol is None else tol, wit,
                           note=f"no counterexample found ({len(maps)} comparison maps)",
                           extra={"per_map": per})


def check_variational_inequality(traj, comparison_maps=None,
                                 tol: Optional[float] = None) -> ConditionResult:
    """max over maps v and stamps of (LHS - RHS) / N of the variational inequality.

    ``comparison_maps`` is a list of ``(id, TimeSeries | array (K+1, *cells))``;
    the default battery is :func:`default_comparison_maps`.
    """
    return _check_maps("variational", traj, comparison_maps, False, tol)


def check_intermediate_condition(traj, comparison_maps=None,
                                 tol: Optional[float] = None) -> ConditionResult:
    """As :func:`check_variational_inequality` with ``int z.grad v`` in place of
    ``f(Dv)`` and ``int f*(z)`` added on the left."""
    return _check_maps("intermediate", traj, comparison_maps, True, tol)


def check_comparison(traj_a, traj_b, tol: float = 1e-8) -> ConditionResult:
    """Curve ``k -> |(u_k - v_k)_+|^2``; must stay below its initial value and not increase.

    The residual is the largest violation of either property divided by
    the larger problem scale.
    """
    if traj_a.grid != traj_b.grid:
        raise ShapeMismatch("trajectories live on different grids")
    if len(traj_a.u) != len(traj_b.u) or not np.allclose(traj_a.times, traj_b.times):
        raise ShapeMismatch("trajectories have different stamps")
    A, B = _Arrays(traj_a), _Arrays(traj_b)
    pos = np.maximum(A.u - B.u, 0.0)
    curve = A.dot(pos, pos)
    above = float(np.max(curve - curve[0]))
    steps = float(np.max(np.diff(curve))) if len(curve) > 1 else 0.0
    scale = max(A.N, B.N)
    viol = max(above, steps, 0.0)
    k = int(np.argmax(np.maximum(curve - curve[0], np.concatenate([[0.0], np.diff(curve)]))))
    return ConditionResult("comparison", viol / scale, tol, {"k": k},
                           extra={"curve": [float(c) for c in curve]})


def comparison_curve(traj_a, traj_b) -> np.ndarray:
    return np.array(check_comparison(traj_a, traj_b).extra["curve"])


def attached_faces(traj, atol: Optional[float] = None) -> np.ndarray:
    """(K+1, nb) mask of boundary faces where the trace meets the data."""
    A = _Arrays(traj)
    atol = 1e-6 * A.N if atol is None else atol
    return np.abs(A.Tu - A.gb) <= atol


def trace_admissible(traj, phis: Sequence[TestFunction], atol: Optional[float] = None):
    """Test functions whose trace vanishes wherever the trace of u meets g."""
    att = attached_faces(traj, atol)
    bc = traj.grid.boundary.cell
    keep = []
    for p in phis:
        tp = p.values.reshape(p.values.shape[0], -1)[:, bc]
        if not np.any((tp != 0) & att):
            keep.append(p)
    return keep


def check_euler_lagrange(traj, fam: TestFunctionFamily, tol: Optional[float] = None,
                         phis: Optional[Sequence[TestFunction]] = None,
                         atol: Optional[float] = None) -> ConditionResult:
    """max over phi of |int D_xi f(grad u).grad phi - int u d_t phi - int_bdry sign0(Tg - Tu) T phi f_inf| / N.

    Raises
    ------
    NotDifferentiable
        If the integrand has a kink (``m == 0``).
    InvalidParam
        If a test function has nonzero trace where the trace of ``u`` meets
        ``g`` (use :func:`trace_admissible` to filter a family).
    """
    A = _Arrays(traj)
    spec = A.spec_mu
    if not spec.is_smooth:
        raise NotDifferentiable("Euler-Lagrange check needs a differentiable integrand")
    phis = fam.generate(A.grid, A.times) if phis is None else list(phis)
    _check_phis(phis, A)
    bc = A.grid.boundary.cell
    att = attached_faces(traj, atol)
    zgrad = lg.grad(spec, A.grid.centers, A.xi_u[1:])
    sgn = np.where(att, 0.0, lg.sign0(A.gb - A.Tu))
    worst, wid = 0.0, None
    for p in phis:
        Tphi = p.values.reshape(A.K + 1, -1)[:, bc]
        if np.any((Tphi != 0) & att):
            raise InvalidParam(f"test function {p.phi_id} has trace where Tu = Tg")
        xi_phi = gr.cell_gradient_values(A.grid, p.values)
        zterm = A.tau * np.sum(A.dot(np.sum(zgrad * xi_phi[1:], axis=-1), 1.0))
        uterm = np.sum(A.dot(A.u[:-1], p.values[1:] - p.values[:-1]))
        bterm = A.tau * np.sum(sgn[1:] * Tphi[1:] * A.cb) * A.area
        r = abs(zterm - uterm - bterm) / A.N
        if r > worst or wid is None:
            worst, wid = r, p.phi_id
    return ConditionResult("euler_lagrange", worst, default_tol(traj) if tol is None else tol,
                           {"phi_id": wid}, note=f"{len(phis)} trace-admissible phi")


# ---------------------------------------------------------------- batteries

def g_extension(traj) -> np.ndarray:
    """Series whose trace equals the boundary data: boundary cells carry the
    mean of their faces' data, interior cells the mean over all faces."""
    g = traj.grid
    bc = g.boundary.cell
    n = int(np.prod(g.cells))
    out = []
    for gk in traj.g:
        s = np.bincount(bc, weights=gk.values, minlength=n)
        c = np.bincount(bc, minlength=n)
        v = np.full(n, float(np.mean(gk.values)) if gk.values.size else 0.0)
        v[c > 0] = s[c > 0] / c[c > 0]
        out.append(v.reshape(g.cells) * g.active)
    return np.stack(out)


def default_comparison_maps(traj, eps: Sequence[float] = (0.1, 0.01), seed: int = 0):
    """Constants, u itself, u time-mollified, u +- eps * interior bumps, g-extension."""
    u = traj.u
    vals = u.stack()
    maps = [("const-0", np.zeros_like(vals)),
            ("const-mean-u0", np.full_like(vals, float(np.mean(vals[0][traj.grid.active])))),
            ("u", vals)]
    if traj.tau < float(u.times[-1]):
        ud = mo.exp_mollify(u, mo.MollifyConfig(2.0 * traj.tau, u.frames[0]))
        maps.append(("u-mollified", ud.stack()))
    fam = TestFunctionFamily(count=2, seed=seed, canonical=True, kinds=("interior",))
    bumps = fam.generate(traj.grid, u.times)[:3]
    for e in eps:
        for p in bumps:
            maps.append((f"u+{e:g}*{p.phi_id}", vals + e * p.values))
    maps.append(("g-extension", g_extension(traj)))
    return maps


def certify(traj, fam: Optional[TestFunctionFamily] = None, tol: Optional[float] = None,
            comparison_maps=None) -> CertificateReport:
    """Run every applicable check and collect a report."""
    fam = fam or TestFunctionFamily()
    results = [check_subgradient(traj, tol=tol),
               check_divergence_condition(traj, fam, tol=tol),
               check_pairing_condition(traj, fam, tol=tol),
               check_initial_condition(traj, tol=None if tol is None else tol),
               check_variational_inequality(traj, comparison_maps, tol=tol),
               check_intermediate_condition(traj, comparison_maps, tol=tol)]
    if traj.spec_mu.is_smooth:
        phis = trace_admissible(traj, fam.generate(traj.grid, traj.times))
        results.append(check_euler_lagrange(traj, fam, tol=tol, phis=phis))
    header = {"method": traj.method, "steps": traj.n_steps, "tau": traj.tau,
              "h": traj.grid.h, "cells": list(traj.grid.cells),
              "battery": {"count": fam.count, "seed": fam.seed,
                          "canonical_version": CANONICAL_VERSION if fam.canonical else None},
              "scale": problem_scale(traj)}
    return CertificateReport(results, header)
