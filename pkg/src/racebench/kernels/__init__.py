"""Kernel backend selection.

The compiled extension (racebench.kernels._core) is used when importable;
otherwise the numpy implementation takes over. Set RACEBENCH_PURE_PYTHON=1
to force the fallback. Both backends return bit-identical results.
"""

import os

import numpy as np

from . import _purepy

if os.environ.get("RACEBENCH_PURE_PYTHON", "") not in ("", "0"):
    _impl = _purepy
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _purepy

BACKEND = _impl.BACKEND


def available_backends():
    """Names of the importable backends."""
    names = ["python"]
    try:
        from . import _core  # noqa: F401
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


def get_backend(name):
    """Fetch a backend module by name ('compiled' or 'python')."""
    if name == "python":
        return _purepy
    if name == "compiled":
        from . import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")


def squared_edt(occupied, backend=None):
    """Exact integer squared Euclidean distance transform (cell units)."""
    impl = _impl if backend is None else get_backend(backend)
    return impl.squared_edt(occupied)


def march_rays(df, resolution, origin, xs, ys, angles, max_range, backend=None):
    """Batch ray marching over a distance field (meters).

    origin is the (x, y, yaw) world pose of grid cell (0, 0). All trig is
    evaluated here so both backends see identical direction vectors.
    """
    impl = _impl if backend is None else get_backend(backend)
    ox, oy, oyaw = origin
    cy = float(np.cos(oyaw))
    sy = float(np.sin(oyaw))
    angles = np.asarray(angles, dtype=np.float64)
    # astype always copies: broadcast views are read-only, which the
    # compiled backend's typed memoryviews reject
    xs = np.broadcast_to(np.asarray(xs, dtype=np.float64), angles.shape).astype(np.float64)
    ys = np.broadcast_to(np.asarray(ys, dtype=np.float64), angles.shape).astype(np.float64)
    dirx = np.cos(angles)
    diry = np.sin(angles)
    return impl.march_rays_core(
        np.asarray(df, dtype=np.float64), float(resolution), float(ox), float(oy),
        cy, sy, xs, ys, dirx, diry, float(max_range),
    )
