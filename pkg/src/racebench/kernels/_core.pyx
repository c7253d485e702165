# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: exact squared EDT and distance-field ray marching.

Arithmetic matches racebench.kernels._purepy step for step; keep the two in
sync (the cross-backend equality test enforces it).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

BACKEND = "compiled"


def squared_edt(occupied):
    """Exact squared Euclidean distance transform, in cell units."""
    occ = np.ascontiguousarray(occupied, dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] o = occ
    cdef Py_ssize_t h = o.shape[0]
    cdef Py_ssize_t w = o.shape[1]
    cdef long long inf = h + w

    g_arr = np.empty((h, w), dtype=np.int64)
    cdef long long[:, ::1] g = g_arr
    out_arr = np.empty((h, w), dtype=np.int64)
    cdef long long[:, ::1] out = out_arr

    cdef Py_ssize_t i, j, u, q
    cdef long long cand, fv, sep

    # pass 1: per-column distance (in rows) to the nearest occupied cell
    for j in range(w):
        g[0, j] = 0 if o[0, j] else inf
    for i in range(1, h):
        for j in range(w):
            if o[i, j]:
                g[i, j] = 0
            else:
                cand = g[i - 1, j] + 1
                g[i, j] = cand if cand < inf else inf
    for i in range(h - 2, -1, -1):
        for j in range(w):
            cand = g[i + 1, j] + 1
            if cand < g[i, j]:
                g[i, j] = cand

    # pass 2: per-row lower envelope of parabolas (Meijster scan)
    s_arr = np.empty(w, dtype=np.int64)
    t_arr = np.empty(w, dtype=np.int64)
    cdef long long[::1] s = s_arr
    cdef long long[::1] t = t_arr

    for i in range(h):
        q = 0
        s[0] = 0
        t[0] = 0
        for u in range(1, w):
            while q >= 0:
                fv = (t[q] - s[q]) * (t[q] - s[q]) + g[i, s[q]] * g[i, s[q]]
                cand = (t[q] - u) * (t[q] - u) + g[i, u] * g[i, u]
                if fv > cand:
                    q -= 1
                else:
                    break
            if q < 0:
                q = 0
                s[0] = u
            else:
                sep = (u * u - s[q] * s[q] + g[i, u] * g[i, u] - g[i, s[q]] * g[i, s[q]]) \
                    // (2 * (u - s[q])) + 1
                if sep < w:
                    q += 1
                    s[q] = u
                    t[q] = sep
        for u in range(w - 1, -1, -1):
            out[i, u] = (u - s[q]) * (u - s[q]) + g[i, s[q]] * g[i, s[q]]
            if u == t[q]:
                q -= 1
    return out_arr


def march_rays_core(df, double resolution, double ox, double oy,
                    double cy, double sy, xs, ys, dirx, diry, double max_range):
    """Sphere-march a batch of rays through a distance field (meters)."""
    df_c = np.ascontiguousarray(df, dtype=np.float64)
    cdef double[:, ::1] f = df_c
    cdef Py_ssize_t h = f.shape[0]
    cdef Py_ssize_t w = f.shape[1]

    xs_c = np.ascontiguousarray(xs, dtype=np.float64)
    ys_c = np.ascontiguousarray(ys, dtype=np.float64)
    dx_c = np.ascontiguousarray(dirx, dtype=np.float64)
    dy_c = np.ascontiguousarray(diry, dtype=np.float64)
    cdef double[::1] x0 = xs_c
    cdef double[::1] y0 = ys_c
    cdef double[::1] ux = dx_c
    cdef double[::1] uy = dy_c
    cdef Py_ssize_t n = x0.shape[0]

    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr

    cdef double half_res = 0.5 * resolution
    cdef double t, d, px, py, dx, dy, xg, yg, r
    cdef Py_ssize_t k, row, col

    for k in range(n):
        t = 0.0
        px = x0[k] + t * ux[k]
        py = y0[k] + t * uy[k]
        dx = px - ox
        dy = py - oy
        xg = cy * dx + sy * dy
        yg = -sy * dx + cy * dy
        col = <Py_ssize_t>floor(xg / resolution)
        row = <Py_ssize_t>floor(yg / resolution)
        d = f[row, col] if (0 <= col < w and 0 <= row < h) else 0.0
        while d >= half_res and t < max_range:
            t += d
            px = x0[k] + t * ux[k]
            py = y0[k] + t * uy[k]
            dx = px - ox
            dy = py - oy
            xg = cy * dx + sy * dy
            yg = -sy * dx + cy * dy
            col = <Py_ssize_t>floor(xg / resolution)
            row = <Py_ssize_t>floor(yg / resolution)
            d = f[row, col] if (0 <= col < w and 0 <= row < h) else 0.0
        r = t + d - half_res
        if r < 0.0:
            r = 0.0
        if r > max_range:
            r = max_range
        if t >= max_range:
            r = max_range
        out[k] = r
    return out_arr
