"""Local boundedness: energy-estimate terms, the level-set sup bound and stress tests.

Backward cylinders are ``Q(rho, theta) = B(z, rho) x (t0 - theta rho, t0)``.
Discrete balls are the cells whose centres satisfy ``|x - z| <= rho``; the
time interval keeps every backward-Euler stamp ``k`` whose piece
``(t_{k-1}, t_k]`` meets it, which is conservative for suprema.

The constants in the energy estimate and in the sup bound exist but are not
explicit.  They are calibrated empirically (largest ratio seen on a
training run) and soundness on held-out runs is the testable property.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import grid as gr
from .errors import CylinderOutOfDomain, InsufficientLevels, InvalidParam

CALIBRATION_NOTE = ("constants are calibrated empirically on a training run; "
                    "soundness is only claimed on held-out runs")


@dataclass(frozen=True)
class Cylinder:
    center: tuple
    t0: float
    rho: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        if not self.rho > 0 or not self.theta > 0:
            raise InvalidParam("rho and theta must be positive")

    @property
    def duration(self) -> float:
        return self.theta * self.rho

    def ball(self, grid: gr.GridSpec, radius: Optional[float] = None) -> np.ndarray:
        """Active cells whose centres lie in the closed ball of ``radius``."""
        r = self.rho if radius is None else radius
        d = np.linalg.norm(grid.centers - np.asarray(self.center), axis=-1)
        return (d <= r * (1 + 1e-12)) & grid.active

    def stamps(self, times, radius: Optional[float] = None) -> np.ndarray:
        """Indices ``k >= 1`` whose step ``(t_{k-1}, t_k]`` meets the time interval."""
        r = self.rho if radius is None else radius
        t = np.asarray(times, dtype=float)
        lo = self.t0 - self.theta * r
        k = np.arange(1, len(t))
        eps = 1e-12 * max(1.0, abs(self.t0))
        return k[(t[k] > lo + eps) & (t[k - 1] < self.t0 - eps)]

    def validate(self, grid: gr.GridSpec, times) -> None:
        """Raise unless the cylinder sits compactly inside the domain and time span."""
        c = np.asarray(self.center)
        if c.shape != (grid.dim,):
            raise CylinderOutOfDomain(f"centre has {c.size} coordinates, grid is {grid.dim}-D")
        lo = np.asarray(grid.origin)
        hi = lo + grid.h * np.asarray(grid.cells)
        if np.any(c - self.rho <= lo) or np.any(c + self.rho >= hi):
            raise CylinderOutOfDomain("ball leaves the grid box")
        d = np.linalg.norm(grid.centers - c, axis=-1)
        if np.any((d <= self.rho + 0.5 * grid.h * math.sqrt(grid.dim)) & ~grid.active):
            raise CylinderOutOfDomain("ball meets inactive cells")
        T = float(times[-1])
        if self.t0 - self.duration <= 0.0 or self.t0 > T * (1 + 1e-12):
            raise CylinderOutOfDomain(f"time interval ({self.t0 - self.duration}, {self.t0}) "
                                      f"not inside (0, {T}]")


@dataclass(frozen=True)
class DeGiorgiConfig:
    k0: float = 0.0
    xi: float = 1.0
    r: float = 4.0
    alpha: float = 1.0
    c_cal: float = 1.0
    max_levels: int = 60

    def __post_init__(self):
        if not self.xi > 0:
            raise InvalidParam("xi must be positive")
        if not self.alpha >= 1:
            raise InvalidParam("alpha must be >= 1")
        if not self.c_cal >= 0:
            raise InvalidParam("c_cal must be >= 0")
        if self.max_levels < 1:
            raise InvalidParam("max_levels must be >= 1")
        if not math.isfinite(self.r):
            raise InvalidParam("r must be finite")

    def check_dim(self, n: int) -> None:
        if not self.r > n:
            raise InvalidParam(f"r = {self.r} must exceed the dimension {n}")


# ---------------------------------------------------------------- energy estimate

@dataclass
class EnergyTerms:
    lhs: float
    rhs_terms: tuple

    @property
    def rhs(self) -> float:
        return float(sum(self.rhs_terms))

    @property
    def ratio(self) -> float:
        if self.rhs == 0.0:
            return 0.0 if self.lhs == 0.0 else math.inf
        return self.lhs / self.rhs


def cutoff(grid: gr.GridSpec, times, cyl: Cylinder) -> np.ndarray:
    """Smooth nonnegative cutoff supported in the cylinder, ``(K+1, *cells)``.

    A ``cos^2`` radial profile times a ``sin^2`` ramp that vanishes at the
    start of the interval and rises to 1 at ``t0``.
    """
    t = np.asarray(times, dtype=float)
    d = np.linalg.norm(grid.centers - np.asarray(cyl.center), axis=-1)
    sp = np.where(d < cyl.rho, np.cos(0.5 * np.pi * d / cyl.rho) ** 2, 0.0) * grid.active
    lo = cyl.t0 - cyl.duration
    s = np.clip((t - lo) / cyl.duration, 0.0, 1.0)
    tw = np.where(t <= cyl.t0 * (1 + 1e-12), np.sin(0.5 * np.pi * s) ** 2, 0.0)
    return tw.reshape((-1,) + (1,) * grid.dim) * sp


def energy_estimate_terms(u: gr.TimeSeries, k: float, phi, cyl: Cylinder, spec=None,
                          alpha: float = 1.0) -> EnergyTerms:
    """Both sides of the local energy estimate at level ``k``.

    ``lhs = max_t int phi (u-k)_+^{1+alpha} + int TV(phi (u-k)_+^alpha) dt`` and
    ``rhs_terms = (iint |grad phi| (u-k)_+^alpha, iint (d_t phi)_+ (u-k)_+^{1+alpha},
    iint_{u>k} phi)``, all summed over the cylinder.  ``phi`` is an array
    ``(K+1, *cells)`` or ``None`` for :func:`cutoff`.  ``spec`` is accepted
    for interface symmetry; the estimate is stated without it.
    """
    del spec
    g = u.grid
    cyl.validate(g, u.times)
    if alpha < 1:
        raise InvalidParam("alpha must be >= 1")
    vals = u.stack()
    phi = cutoff(g, u.times, cyl) if phi is None else np.asarray(phi, dtype=float)
    if phi.shape != vals.shape:
        raise InvalidParam(f"cutoff shape {phi.shape} != series shape {vals.shape}")
    if np.any(phi < 0) or np.any(phi > 1 + 1e-12):
        raise InvalidParam("cutoff must take values in [0, 1]")
    ks = cyl.stamps(u.times)
    ball = cyl.ball(g)
    tau = np.diff(u.times)[ks - 1]
    vol = g.cell_volume
    w = np.maximum(vals[ks] - k, 0.0)
    wa = w ** alpha
    p = phi[ks]
    sup_term = float(np.max(np.sum(p * w * wa * ball, axis=tuple(range(1, g.dim + 1)))) * vol) \
        if len(ks) else 0.0
    xi = gr.cell_gradient_values(g, p * wa)
    tv = np.sum(np.sqrt(np.sum(xi ** 2, axis=-1)) * ball, axis=tuple(range(1, g.dim + 1))) * vol
    gphi = np.sqrt(np.sum(gr.cell_gradient_values(g, p) ** 2, axis=-1))
    dtp = np.maximum((phi[ks] - phi[ks - 1]) / tau.reshape((-1,) + (1,) * g.dim), 0.0)
    tw = tau.reshape((-1,) + (1,) * g.dim) * vol * ball
    r1 = float(np.sum(gphi * wa * tw))
    r2 = float(np.sum(dtp * w * wa * tw))
    r3 = float(np.sum(p * (vals[ks] > k) * tw))
    return EnergyTerms(sup_term + float(np.sum(tv * tau)), (r1, r2, r3))


def calibrate_energy_constant(series: Sequence[gr.TimeSeries], levels: Sequence[float],
                              cyl: Cylinder, alpha: float = 1.0) -> float:
    """Largest observed ``lhs / sum(rhs)`` over the given series and levels."""
    best = 0.0
    for u in series:
        for k in levels:
            e = energy_estimate_terms(u, k, None, cyl, alpha=alpha)
            best = max(best, e.ratio)
    return best


# ---------------------------------------------------------------- sup bound

@dataclass
class LevelRow:
    i: int
    k_i: float
    rho_i: float
    Y_i: float
    cells_above_level: int


@dataclass
class SupBound:
    bound: float
    k: float
    excess_term: float
    mean_r: float
    actual_max: float
    table: List[LevelRow]
    converged: bool
    config: dict = field(default_factory=dict)
    cylinder: dict = field(default_factory=dict)
    note: str = CALIBRATION_NOTE

    @property
    def sound(self) -> bool:
        return bool(self.actual_max <= self.bound)

    def to_dict(self) -> dict:
        return {"note": self.note, "config": self.config, "cylinder": self.cylinder,
                "bound": self.bound, "k": self.k, "excess_term": self.excess_term,
                "mean_r": self.mean_r, "actual_max": self.actual_max, "sound": self.sound,
                "converged": self.converged, "levels": len(self.table)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write_table_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "k_i", "rho_i", "Y_i", "cells_above_level"])
            for r in self.table:
                w.writerow([r.i, repr(r.k_i), repr(r.rho_i), repr(r.Y_i), r.cells_above_level])


def _cyl_values(u: gr.TimeSeries, cyl: Cylinder, radius: float):
    """Values inside the discrete cylinder of ``radius`` and their space-time weights."""
    ks = cyl.stamps(u.times, radius)
    ball = cyl.ball(u.grid, radius)
    vals = u.stack()[ks][:, ball]
    w = np.diff(u.times)[ks - 1][:, None] * u.grid.cell_volume * np.ones_like(vals)
    return vals, w


def _mean(a, w) -> float:
    return float(np.sum(a * w) / np.sum(w))


def level(i: int, k: float, k0: float) -> float:
    return (1.0 - 2.0 ** (-i)) * k + k0


def radius(i: int, rho: float) -> float:
    return 0.5 * rho + 2.0 ** (-i - 1) * rho


def excess_term(mean_r: float, cyl: Cylinder, cfg: DeGiorgiConfig, n: int) -> float:
    """``((1 + 1/xi)^{1+1/n} / theta)^{n/(r-n)} (mean_r + theta rho)^{1/(r-n)}``."""
    e = 1.0 / (cfg.r - n)
    return (((1.0 + 1.0 / cfg.xi) ** (1.0 + 1.0 / n) / cyl.theta) ** (n * e)
            * (mean_r + cyl.duration) ** e)


def half_cylinder_max(u: gr.TimeSeries, cyl: Cylinder, k0: float = 0.0) -> float:
    """Largest ``(u - k0)_+`` on the half cylinder ``Q(rho/2, theta)``."""
    vals, _ = _cyl_values(u, cyl, 0.5 * cyl.rho)
    return float(np.max(np.maximum(vals - k0, 0.0))) if vals.size else 0.0


def degiorgi_supbound(u: gr.TimeSeries, cyl: Cylinder, cfg: DeGiorgiConfig,
                      strict: bool = False) -> SupBound:
    """Sup bound ``k0 + k`` on ``Q(rho/2, theta)`` and the level iteration table.

    ``k = c_cal * excess_term + rho + xi * theta``; the table lists
    ``Y_i``, the mean of ``(u - k_i)_+^2`` over ``Q(rho_i, theta)``.  When
    ``Y`` has not reached zero or fallen below its first value by
    ``max_levels`` the result is flagged unconverged; with ``strict``
    :class:`InsufficientLevels` is raised instead.
    """
    g = u.grid
    cfg.check_dim(g.dim)
    cyl.validate(g, u.times)
    vals, w = _cyl_values(u, cyl, cyl.rho)
    mean_r = _mean(np.maximum(vals - cfg.k0, 0.0) ** cfg.r, w)
    ex = excess_term(mean_r, cyl, cfg, g.dim)
    k = cfg.c_cal * ex + cyl.rho + cfg.xi * cyl.theta
    table = []
    for i in range(cfg.max_levels + 1):
        ki, ri = level(i, k, cfg.k0), radius(i, cyl.rho)
        v, wi = _cyl_values(u, cyl, ri)
        table.append(LevelRow(i, ki, ri, _mean(np.maximum(v - ki, 0.0) ** 2, wi),
                              int(np.count_nonzero(v > ki))))
    Y = [r.Y_i for r in table]
    converged = Y[-1] == 0.0 or (len(Y) > 1 and Y[-1] < Y[1])
    if strict and not converged:
        raise InsufficientLevels(f"Y did not decrease within {cfg.max_levels} levels")
    return SupBound(cfg.k0 + k, k, ex, mean_r, cfg.k0 + half_cylinder_max(u, cyl, cfg.k0),
                    table, converged, asdict(cfg),
                    {"center": list(cyl.center), "t0": cyl.t0, "rho": cyl.rho,
                     "theta": cyl.theta})


def calibrate_sup_constant(u: gr.TimeSeries, cyl: Cylinder, cfg: DeGiorgiConfig) -> float:
    """Smallest ``c_cal`` for which the bound dominates the half-cylinder maximum of ``u``."""
    g = u.grid
    cfg.check_dim(g.dim)
    cyl.validate(g, u.times)
    vals, w = _cyl_values(u, cyl, cyl.rho)
    mean_r = _mean(np.maximum(vals - cfg.k0, 0.0) ** cfg.r, w)
    need = half_cylinder_max(u, cyl, cfg.k0) - cyl.rho - cfg.xi * cyl.theta
    return max(0.0, need / excess_term(mean_r, cyl, cfg, g.dim))


# ---------------------------------------------------------------- fast geometric convergence

def fast_geometric_threshold(C: float, b: float, beta: float) -> float:
    """``C^{-1/beta} b^{-1/beta^2}``: starting values at or below it converge to zero."""
    return C ** (-1.0 / beta) * b ** (-1.0 / beta ** 2)


def fast_geometric(Y0: float, C: float, b: float, beta: float, n: int = 60) -> np.ndarray:
    """Iterates of ``Y_{i+1} = C b^i Y_i^{1+beta}`` for ``i = 0..n-1`` (overflow becomes inf)."""
    if not (C > 0 and b > 1 and beta > 0 and Y0 >= 0):
        raise InvalidParam("need C > 0, b > 1, beta > 0, Y0 >= 0")
    Y = np.empty(n + 1)
    Y[0] = Y0
    with np.errstate(over="ignore"):
        for i in range(n):
            # log form avoids overflow in the intermediate power
            y = Y[i]
            if y == 0.0 or not math.isfinite(y):
                Y[i + 1] = y
                continue
            lg_ = math.log(C) + i * math.log(b) + (1.0 + beta) * math.log(y)
            Y[i + 1] = math.exp(lg_) if lg_ < 709.0 else math.inf
    return Y


# ---------------------------------------------------------------- stress tests

def centred_grid(n: int, cells: int) -> gr.GridSpec:
    """``cells^n`` grid covering ``[-1, 1]^n`` by centres, with a cell centred at the origin.

    ``cells`` must be odd; ``h = 2 / (cells - 1)``.
    """
    if cells < 3 or cells % 2 == 0:
        raise InvalidParam("cells must be odd and >= 3")
    if n not in (1, 2):
        raise InvalidParam("dimension must be 1 or 2")
    h = 2.0 / (cells - 1)
    return gr.GridSpec((cells,) * n, h, (-0.5 * cells * h,) * n)


def unbounded_example(n: int, grid: gr.GridSpec, t: float) -> gr.ScalarField:
    """``(1 - t)_+ (n - 1) / |x|`` at cell centres, with ``|x|`` floored at ``h/2``."""
    if grid.dim != n:
        raise InvalidParam(f"grid is {grid.dim}-D, example is {n}-D")
    r = np.maximum(np.linalg.norm(grid.centers, axis=-1), 0.5 * grid.h)
    return gr.ScalarField(grid, max(1.0 - t, 0.0) * (n - 1) / r)


def ball_max_growth(u: gr.ScalarField, j_max: int = 30) -> List[tuple]:
    """``(j, radius, max)`` with the max taken over the dyadic shell
    ``2^{-j-1} <= |x| < 2^{-j}``, for every ``j`` with ``2^{-j} >= 2h``.

    On a fixed grid the maximum over the whole ball is pinned at the cells
    nearest the origin; the shell maximum is a lower bound for it that
    exposes the growth at each scale.
    """
    g = u.grid
    d = np.linalg.norm(g.centers, axis=-1)
    out = []
    for j in range(j_max + 1):
        r = 2.0 ** (-j)
        if r < 2.0 * g.h:
            break
        sel = (d >= 0.5 * r) & (d < r) & g.active
        if sel.any():
            out.append((j, r, float(np.max(u.values[sel]))))
    return out


def growth_ratios(rows) -> List[float]:
    return [b[2] / a[2] for a, b in zip(rows, rows[1:]) if a[2] > 0]


def semicontinuous_envelope(u: gr.TimeSeries, thetas: Sequence[float]) -> List[gr.TimeSeries]:
    """Max over the smallest resolvable backward cylinder, one series per ``theta``.

    The cylinder at ``(x, t_k)`` is the ``3^n`` cell stencil around ``x``
    (active cells only) times the stamps ``k - w + 1 .. k`` with
    ``w = max(1, ceil(theta h / tau))``.
    """
    g = u.grid
    vals = u.stack()
    lowest = np.where(g.active, vals, -np.inf)
    sp = lowest.copy()
    for ax in range(g.dim):
        a = ax + 1
        pad = [(0, 0)] * sp.ndim
        pad[a] = (1, 1)
        p = np.pad(sp, pad, constant_values=-np.inf)
        n = sp.shape[a]
        sp = np.maximum(np.maximum(p.take(range(0, n), axis=a), p.take(range(1, n + 1), axis=a)),
                        p.take(range(2, n + 2), axis=a))
    dt = np.diff(u.times)
    tau = float(np.min(dt)) if len(dt) else 1.0
    out = []
    for th in thetas:
        if not th > 0:
            raise InvalidParam("theta must be positive")
        w = max(1, math.ceil(th * g.h / tau - 1e-12))
        env = sp.copy()
        for s in range(1, w):
            env[s:] = np.maximum(env[s:], sp[:-s])
        env = np.where(g.active, env, 0.0)
        out.append(gr.TimeSeries.from_stack(g, u.times, env))
    return out
