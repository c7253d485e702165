"""Numpy implementations of the hot kernels.

These mirror racebench.kernels._core operation-for-operation so both backends
produce bit-identical float64 results: all trig happens in the dispatching
wrapper, the kernels only multiply/add/divide/floor, and the compiled core is
built with FMA contraction disabled.
"""

import numpy as np

BACKEND = "python"


def squared_edt(occupied):
    """Exact squared Euclidean distance transform, in cell units.

    Two-pass algorithm: per-column nearest-occupied row distances, then a
    per-row min-plus reduction over squared horizontal offsets. All integer
    arithmetic, so the result is exact.
    """
    occ = np.asarray(occupied, dtype=bool)
    h, w = occ.shape
    inf = h + w

    g = np.empty((h, w), dtype=np.int64)
    g[0] = np.where(occ[0], 0, inf)
    for i in range(1, h):
        g[i] = np.where(occ[i], 0, np.minimum(g[i - 1] + 1, inf))
    for i in range(h - 2, -1, -1):
        np.minimum(g[i], g[i + 1] + 1, out=g[i])

    out = np.empty((h, w), dtype=np.int64)
    cols = np.arange(w, dtype=np.int64)
    offsets2 = (cols[:, None] - cols[None, :]) ** 2
    for i in range(h):
        out[i] = (g[i][None, :] ** 2 + offsets2).min(axis=1)
    return out


def march_rays_core(df, resolution, ox, oy, cy, sy, xs, ys, dirx, diry, max_range):
    """Cast rays through a Euclidean distance field by sphere marching.

    df holds distances in meters; each ray advances by the local field value
    and terminates once it is within half a cell of an obstacle (or leaves
    the grid, treated as occupied). Returns ranges clipped to [0, max_range].
    """
    h, w = df.shape
    half_res = 0.5 * resolution

    def lookup(px, py):
        dx = px - ox
        dy = py - oy
        xg = cy * dx + sy * dy
        yg = -sy * dx + cy * dy
        col = np.floor(xg / resolution).astype(np.int64)
        row = np.floor(yg / resolution).astype(np.int64)
        inside = (col >= 0) & (col < w) & (row >= 0) & (row < h)
        d = np.zeros(px.shape, dtype=np.float64)
        d[inside] = df[row[inside], col[inside]]
        return d

    t = np.zeros(xs.shape, dtype=np.float64)
    d = lookup(xs, ys)
    active = (d >= half_res) & (t < max_range)
    while active.any():
        t[active] += d[active]
        d[active] = lookup(xs[active] + t[active] * dirx[active],
                           ys[active] + t[active] * diry[active])
        active = (d >= half_res) & (t < max_range)

    ranges = t + d - half_res
    np.clip(ranges, 0.0, max_range, out=ranges)
    ranges[t >= max_range] = max_range
    return ranges
