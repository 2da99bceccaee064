"""Pure numpy primal-dual kernels (reference implementation and fallback).

Saddle problem of one implicit step, scaled by h^-n::

    min_v max_{p,q}  <K1 v, p> - F*(p) + <B v / h, q> - G*(q) + |v - u_prev|^2 / (2 t)

with ``(K1 v)_a = a_a (v[c + e_a] - v[c]) / h`` on owned faces,
``F*(p) = -m sqrt(1 - |p|^2)`` on the unit ball and
``G*(q) = q g / h`` on ``|q| <= c``.  Arrays are 2D; 1D problems use shape
``(n, 1)`` with ``ay = 0``.  Every function mirrors a Cython twin in
``_ckernels.pyx`` operation by operation.
"""

import numpy as np

RADIAL_NEWTON_ITERS = 60


def radial_prox(s, a):
    """Radius of prox_{a F*} for a dual vector of norm ``s``.

    Solves ``a m t + t / sqrt(1 + t^2) = s`` (``a`` already multiplied by
    ``m``) for ``t >= 0`` and returns ``t / sqrt(1 + t^2)``.  The left side is
    concave and increasing, so Newton from ``t = 0`` increases monotonically
    to the root.
    """
    if a == 0.0:
        return np.minimum(s, 1.0)
    t = np.zeros_like(s)
    # hypot keeps t / sqrt(1 + t^2) finite when a is tiny and t huge
    for _ in range(RADIAL_NEWTON_ITERS):
        sw = np.hypot(1.0, t)
        with np.errstate(over="ignore"):
            w = sw * sw
        phi = a * t + t / sw - s
        with np.errstate(over="ignore"):
            t = t - phi / (a + 1.0 / (w * sw))
        if np.all(np.abs(phi) <= 1e-15 * (1.0 + s)):
            break
    return t / np.hypot(1.0, t)


def adjoint(ax, ay, px, py, bcell, q, h, out):
    """out = K1^T p + B^T q / h."""
    wx = ax * px
    wy = ay * py
    out[...] = wx
    out[1:, :] -= wx[:-1, :]
    out[:, :] += wy
    out[:, 1:] -= wy[:, :-1]
    out *= -1.0 / h
    np.add.at(out.reshape(-1), bcell, q / h)
    return out


def pd_run(up, ax, ay, bcell, bc, bg, m, t, h, x, xb, px, py, q,
           sigma, tau, n_iters, accelerate, theta):
    """Run ``n_iters`` Chambolle-Pock iterations in place.

    With ``accelerate`` the step sizes follow the strongly convex schedule
    (gamma = 1/t); otherwise ``theta`` is the fixed relaxation.
    Returns the updated ``(sigma, tau)``.
    """
    inv_h = 1.0 / h
    gx = np.zeros_like(x)
    gy = np.zeros_like(x)
    kty = np.zeros_like(x)
    xf = xb.reshape(-1)
    gamma = 1.0 / t
    for _ in range(n_iters):
        gx[:-1, :] = ax[:-1, :] * (xb[1:, :] - xb[:-1, :]) * inv_h
        gy[:, :-1] = ay[:, :-1] * (xb[:, 1:] - xb[:, :-1]) * inv_h
        rx = px + sigma * gx
        ry = py + sigma * gy
        s = np.sqrt(rx * rx + ry * ry)
        r = radial_prox(s, sigma * m)
        scale = np.where(s > 0.0, r / np.where(s > 0.0, s, 1.0), 0.0)
        px[...] = rx * scale
        py[...] = ry * scale
        q[...] = np.clip(q + sigma * (xf[bcell] - bg) * inv_h, -bc, bc)

        adjoint(ax, ay, px, py, bcell, q, h, kty)
        k = tau / t
        xn = (x - tau * kty + k * up) / (1.0 + k)
        if accelerate:
            th = 1.0 / np.sqrt(1.0 + 2.0 * gamma * tau)
        else:
            th = theta
        xb[...] = xn + th * (xn - x)
        x[...] = xn
        if accelerate:
            tau *= th
            sigma /= th
    return sigma, tau


def pd_gap(up, ax, ay, bcell, bc, bg, m, t, h, px, py, q, v):
    """Recover ``v = u_prev - t (K1^T p + B^T q / h)`` and its duality gaps.

    Returns ``(max cell gap, sum of cell gaps, sum of boundary gaps)``, all
    unweighted; the boundary gap of a face is ``(c |v - g| - q (v - g)) / h``.
    """
    kty = np.zeros_like(up)
    adjoint(ax, ay, px, py, bcell, q, h, kty)
    v[...] = up - t * kty
    inv_h = 1.0 / h
    yx = np.zeros_like(v)
    yy = np.zeros_like(v)
    yx[:-1, :] = ax[:-1, :] * (v[1:, :] - v[:-1, :]) * inv_h
    yy[:, :-1] = ay[:, :-1] * (v[:, 1:] - v[:, :-1]) * inv_h
    f = np.sqrt(m * m + yx * yx + yy * yy)
    fs = -m * np.sqrt(np.maximum(0.0, 1.0 - px * px - py * py))
    gap = f + fs - (px * yx + py * yy)
    d = v.reshape(-1)[bcell] - bg
    bgap = (bc * np.abs(d) - q * d) * inv_h
    return float(gap.max()), float(gap.sum()), float(bgap.sum())
