"""Bundled test problems shared by the test suite, benchmarks and CLI presets."""

from __future__ import annotations

import numpy as np

from . import grid as gr
from . import lagrangian as lg
from .errors import InvalidParam
from .solver import Problem


def plateau1d(n: int = 200, T: float = 0.05, a: float = 0.3, b: float = 0.7,
              height: float = 1.0, spec=None) -> Problem:
    """Indicator of ``(a, b)`` on the unit interval with zero Dirichlet data.

    Under TV each step lowers the plateau by ``2 tau / (b - a)`` while it
    stays positive.
    """
    G = gr.GridSpec((n,), 1.0 / n)
    x = G.centers[..., 0]
    u0 = gr.ScalarField(G, height * ((x > a) & (x < b)))
    return Problem(G, T, u0, spec or lg.total_variation(), 0.0, name="plateau1d")


def plateau_decay(tau: float, width: float, height: float, k: int) -> float:
    """Exact plateau height of the 1D TV scheme after ``k`` steps."""
    return max(height - 2.0 * tau * k / width, 0.0)


def annulus_grid(n: int) -> gr.GridSpec:
    """``n x n`` cells on ``[-1, 1]^2`` restricted to ``0.5 <= |x| <= 1``."""
    G = gr.GridSpec((n, n), 2.0 / n, (-1.0, -1.0))
    r = np.linalg.norm(G.centers, axis=-1)
    return G.with_mask((r >= 0.5) & (r <= 1.0))


def radial_exact(x, t: float, n: int = 2):
    """``(1 - t)_+ (n - 1) / |x|``."""
    r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    return max(1.0 - t, 0.0) * (n - 1) / r


def radial_annulus(n: int = 128, T: float = 0.5, spec=None) -> Problem:
    """TV flow on the annulus with the explicit radial solution as data."""
    G = annulus_grid(n)
    u0 = gr.ScalarField(G, radial_exact(G.centers, 0.0))
    centers = G.boundary.center

    def g(t):
        return gr.BoundaryTrace(G, radial_exact(centers, t))

    return Problem(G, T, u0, spec or lg.total_variation(), g, name="radial")


def constant(n: int = 16, dim: int = 2, c: float = 1.0, T: float = 0.1, spec=None) -> Problem:
    G = gr.GridSpec((n,) * dim, 1.0 / n)
    return Problem(G, T, gr.ScalarField.constant(G, c), spec or lg.total_variation(), c,
                   name="constant")


def boundary_step1d(n: int = 100, T: float = 0.1, left: float = 1.0, spec=None) -> Problem:
    """Zero initial state driven by boundary value ``left`` at x = 0 (0 at x = 1)."""
    G = gr.GridSpec((n,), 1.0 / n)
    gb = np.where(G.boundary.side < 0, left, 0.0)
    return Problem(G, T, gr.ScalarField.constant(G, 0.0), spec or lg.total_variation(),
                   gr.BoundaryTrace(G, gb), name="boundary_step1d")


def bump2d(n: int = 32, T: float = 0.05, amp: float = 1.0, spec=None) -> Problem:
    """Gaussian bump plus a disc indicator on the unit square, zero boundary data."""
    G = gr.GridSpec((n, n), 1.0 / n)
    X = G.centers
    r2 = (X[..., 0] - 0.4) ** 2 + (X[..., 1] - 0.55) ** 2
    disc = np.hypot(X[..., 0] - 0.65, X[..., 1] - 0.4) < 0.18
    u0 = amp * (np.exp(-30.0 * r2) + 0.5 * disc)
    return Problem(G, T, gr.ScalarField(G, u0), spec or lg.total_variation(), 0.0, name="bump2d")


def smooth2d(n: int = 32, T: float = 0.05, spec=None) -> Problem:
    """Smooth data with matching boundary values (sine product plus a tilt)."""
    G = gr.GridSpec((n, n), 1.0 / n)
    X = G.centers
    u0 = np.sin(np.pi * X[..., 0]) * np.sin(np.pi * X[..., 1]) + 0.3 * X[..., 0]
    gb = 0.3 * G.boundary.center[:, 0]
    return Problem(G, T, gr.ScalarField(G, u0), spec or lg.total_variation(),
                   gr.BoundaryTrace(G, gb), name="smooth2d")


def random_piecewise(rng: np.random.Generator, grid: gr.GridSpec, pieces: int = 6,
                     scale: float = 1.0) -> np.ndarray:
    """Random piecewise-constant values on ``pieces`` blocks along axis 0."""
    n = grid.cells[0]
    cuts = np.sort(rng.choice(np.arange(1, n), size=pieces - 1, replace=False))
    levels = rng.uniform(-scale, scale, size=pieces)
    v1 = np.repeat(levels, np.diff(np.concatenate([[0], cuts, [n]])))
    return np.broadcast_to(v1.reshape((n,) + (1,) * (grid.dim - 1)), grid.cells).copy()


def ordered_pair(seed: int, n: int = 64, T: float = 0.05, spec=None, dim: int = 1):
    """Two problems with ordered boundary data ``g_A <= g_B``.

    The initial states differ by a random piecewise-constant field of both
    signs, so ``(u0_A - u0_B)_+`` is nonzero and the comparison curve is
    not trivially zero.
    """
    rng = np.random.default_rng(seed)
    G = gr.GridSpec((n,) * dim, 1.0 / n)
    ub = random_piecewise(rng, G)
    ua = ub + random_piecewise(rng, G, scale=0.5)
    ga = rng.uniform(-1, 1, size=G.n_boundary)
    gb = ga + rng.uniform(0, 0.5, size=G.n_boundary)
    spec = spec or lg.total_variation()
    pa = Problem(G, T, gr.ScalarField(G, ua), spec, gr.BoundaryTrace(G, ga), name=f"pairA{seed}")
    pb = Problem(G, T, gr.ScalarField(G, ub), spec, gr.BoundaryTrace(G, gb), name=f"pairB{seed}")
    return pa, pb


def moving_step_series(n: int = 100, K: int = 200, T: float = 1.0, speed: float = 0.5):
    """1D step ``1{x < 0.25 + speed t}`` sampled at ``K + 1`` stamps (a BV-in-time series)."""
    G = gr.GridSpec((n,), 1.0 / n)
    x = G.centers[..., 0]
    times = np.linspace(0.0, T, K + 1)
    frames = [gr.ScalarField(G, (x < 0.25 + speed * t).astype(float)) for t in times]
    return gr.TimeSeries(times, frames)


def breathing_step_series(n: int = 100, K: int = 200, T: float = 1.0, speed: float = 0.5,
                          amp: float = 0.5):
    """Moving step whose height ``1 + amp sin(2 pi t)`` also moves the left trace."""
    G = gr.GridSpec((n,), 1.0 / n)
    x = G.centers[..., 0]
    times = np.linspace(0.0, T, K + 1)
    frames = [gr.ScalarField(G, (1.0 + amp * np.sin(2 * np.pi * t)) * (x < 0.25 + speed * t))
              for t in times]
    return gr.TimeSeries(times, frames)


def random_bumps(seed: int, n: int = 32, T: float = 0.05, spec=None, bumps: int = 3) -> Problem:
    """Sum of random Gaussian bumps on the unit square with zero boundary data."""
    rng = np.random.default_rng(seed)
    G = gr.GridSpec((n, n), 1.0 / n)
    X = G.centers
    u0 = np.zeros(G.cells)
    for _ in range(bumps):
        c = rng.uniform(0.25, 0.75, size=2)
        w = rng.uniform(0.05, 0.2)
        amp = rng.uniform(0.5, 2.0)
        u0 += amp * np.exp(-np.sum((X - c) ** 2, axis=-1) / (2 * w * w))
    return Problem(G, T, gr.ScalarField(G, u0), spec or lg.total_variation(), 0.0,
                   name=f"random_bumps{seed}")


PRESETS = {
    "plateau1d": plateau1d,
    "radial": radial_annulus,
    "constant": constant,
    "boundary_step1d": boundary_step1d,
    "bump2d": bump2d,
    "smooth2d": smooth2d,
    "random_bumps": random_bumps,
}


def preset(name: str, **kwargs) -> Problem:
    try:
        fn = PRESETS[name]
    except KeyError:
        raise InvalidParam(f"unknown problem preset {name!r}; choose from {sorted(PRESETS)}") from None
    return fn(**kwargs)
