# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled primal-dual kernels; see ``_kernels_py`` for the formulation."""

from libc.math cimport sqrt, fabs, hypot

import numpy as np

cdef int RADIAL_NEWTON_ITERS = 60


cdef inline double _radial(double s, double a) nogil:
    cdef double t, w, sw, phi
    cdef int it
    if a == 0.0:
        return s if s < 1.0 else 1.0
    t = 0.0
    for it in range(RADIAL_NEWTON_ITERS):
        sw = hypot(1.0, t)
        w = sw * sw
        phi = a * t + t / sw - s
        t = t - phi / (a + 1.0 / (w * sw))
        if fabs(phi) <= 1e-15 * (1.0 + s):
            break
    return t / hypot(1.0, t)


def radial_prox(s, double a):
    s = np.asarray(s, dtype=np.float64)
    out = np.empty_like(s)
    cdef double[::1] sv = s.reshape(-1)
    cdef double[::1] ov = out.reshape(-1)
    cdef Py_ssize_t i
    for i in range(sv.shape[0]):
        ov[i] = _radial(sv[i], a)
    return out


cdef void _adjoint(double[:, ::1] ax, double[:, ::1] ay, double[:, ::1] px,
                   double[:, ::1] py, const long long[::1] bcell, double[::1] q,
                   double h, double[:, ::1] out) nogil:
    cdef Py_ssize_t nx = out.shape[0], ny = out.shape[1], i, j, b
    cdef double inv_h = 1.0 / h, acc
    for i in range(nx):
        for j in range(ny):
            acc = ax[i, j] * px[i, j] + ay[i, j] * py[i, j]
            if i > 0:
                acc -= ax[i - 1, j] * px[i - 1, j]
            if j > 0:
                acc -= ay[i, j - 1] * py[i, j - 1]
            out[i, j] = -acc * inv_h
    for b in range(bcell.shape[0]):
        i = bcell[b] // ny
        j = bcell[b] % ny
        out[i, j] += q[b] * inv_h


def adjoint(double[:, ::1] ax, double[:, ::1] ay, double[:, ::1] px, double[:, ::1] py,
            const long long[::1] bcell, double[::1] q, double h, double[:, ::1] out):
    _adjoint(ax, ay, px, py, bcell, q, h, out)
    return np.asarray(out)


def pd_run(const double[:, ::1] up, double[:, ::1] ax, double[:, ::1] ay,
           const long long[::1] bcell, const double[::1] bc, const double[::1] bg,
           double m, double t, double h,
           double[:, ::1] x, double[:, ::1] xb, double[:, ::1] px, double[:, ::1] py,
           double[::1] q, double sigma, double tau, int n_iters, bint accelerate,
           double theta):
    cdef Py_ssize_t nx = x.shape[0], ny = x.shape[1], i, j, b, c
    cdef double inv_h = 1.0 / h, gamma = 1.0 / t
    cdef double gx, gy, rx, ry, s, r, sc, k, xn, th, qq
    cdef int it
    kty_arr = np.zeros((nx, ny))
    cdef double[:, ::1] kty = kty_arr
    with nogil:
        for it in range(n_iters):
            for i in range(nx):
                for j in range(ny):
                    gx = 0.0
                    gy = 0.0
                    if i + 1 < nx:
                        gx = ax[i, j] * (xb[i + 1, j] - xb[i, j]) * inv_h
                    if j + 1 < ny:
                        gy = ay[i, j] * (xb[i, j + 1] - xb[i, j]) * inv_h
                    rx = px[i, j] + sigma * gx
                    ry = py[i, j] + sigma * gy
                    s = sqrt(rx * rx + ry * ry)
                    if s > 0.0:
                        r = _radial(s, sigma * m)
                        sc = r / s
                    else:
                        sc = 0.0
                    px[i, j] = rx * sc
                    py[i, j] = ry * sc
            for b in range(bcell.shape[0]):
                c = bcell[b]
                qq = q[b] + sigma * (xb[c // ny, c % ny] - bg[b]) * inv_h
                if qq > bc[b]:
                    qq = bc[b]
                elif qq < -bc[b]:
                    qq = -bc[b]
                q[b] = qq

            _adjoint(ax, ay, px, py, bcell, q, h, kty)
            k = tau / t
            if accelerate:
                th = 1.0 / sqrt(1.0 + 2.0 * gamma * tau)
            else:
                th = theta
            for i in range(nx):
                for j in range(ny):
                    xn = (x[i, j] - tau * kty[i, j] + k * up[i, j]) / (1.0 + k)
                    xb[i, j] = xn + th * (xn - x[i, j])
                    x[i, j] = xn
            if accelerate:
                tau *= th
                sigma /= th
    return sigma, tau


def pd_gap(const double[:, ::1] up, double[:, ::1] ax, double[:, ::1] ay,
           const long long[::1] bcell, const double[::1] bc, const double[::1] bg,
           double m, double t, double h,
           double[:, ::1] px, double[:, ::1] py, double[::1] q, double[:, ::1] v):
    cdef Py_ssize_t nx = v.shape[0], ny = v.shape[1], i, j, b, c
    cdef double inv_h = 1.0 / h
    cdef double yx, yy, f, fs, g, d, w
    cdef double gmax = -1e300, gsum = 0.0, bsum = 0.0
    kty_arr = np.zeros((nx, ny))
    cdef double[:, ::1] kty = kty_arr
    with nogil:
        _adjoint(ax, ay, px, py, bcell, q, h, kty)
        for i in range(nx):
            for j in range(ny):
                v[i, j] = up[i, j] - t * kty[i, j]
        for i in range(nx):
            for j in range(ny):
                yx = 0.0
                yy = 0.0
                if i + 1 < nx:
                    yx = ax[i, j] * (v[i + 1, j] - v[i, j]) * inv_h
                if j + 1 < ny:
                    yy = ay[i, j] * (v[i, j + 1] - v[i, j]) * inv_h
                f = sqrt(m * m + yx * yx + yy * yy)
                w = 1.0 - px[i, j] * px[i, j] - py[i, j] * py[i, j]
                fs = -m * sqrt(w if w > 0.0 else 0.0)
                g = f + fs - (px[i, j] * yx + py[i, j] * yy)
                if g > gmax:
                    gmax = g
                gsum += g
        for b in range(bcell.shape[0]):
            c = bcell[b]
            d = v[c // ny, c % ny] - bg[b]
            bsum += (bc[b] * fabs(d) - q[b] * d) * inv_h
    return gmax, gsum, bsum
