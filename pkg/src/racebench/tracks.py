"""Synthetic shipped tracks: oval, stadium, and a 12-corner wiggle loop.

All generators return closed CenterlineTrack objects sampled densely enough
for the curvature estimator and the rasterizer.
"""

import numpy as np

from .track import CenterlineTrack


def make_oval(a=13.0, b=8.5, width=0.85, wall_texture=0.05, spacing=0.15):
    """Elliptical loop, CCW. Long sides are nearly straight.

    The side widths carry a gentle deterministic modulation: featureless
    parallel walls make scans translation-invariant along the corridor,
    which starves localisation of information.
    """
    # perimeter via Ramanujan to pick the sample count
    h = ((a - b) / (a + b)) ** 2
    per = np.pi * (a + b) * (1 + 3 * h / (10 + np.sqrt(4 - 3 * h)))
    n = max(64, int(per / spacing))
    t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    pts = np.stack([a * np.cos(t), b * np.sin(t)], axis=1)
    w_left = width + wall_texture * np.sin(7 * t + 0.5)
    w_right = width + wall_texture * np.sin(4 * t + 2.1)
    return CenterlineTrack(points=pts, w_left=w_left, w_right=w_right)


def make_stadium(radius=6.0, straight=14.0, width=0.85, spacing=0.15):
    """Two semicircles joined by two straights, CCW starting on the bottom straight."""
    r, s = float(radius), float(straight)
    pieces = []

    n_straight = max(2, int(round(s / spacing)))
    xs = np.linspace(-s / 2, s / 2, n_straight, endpoint=False)
    pieces.append(np.stack([xs, np.full_like(xs, -r)], axis=1))

    n_arc = max(4, int(round(np.pi * r / spacing)))
    ang = np.linspace(-np.pi / 2, np.pi / 2, n_arc, endpoint=False)
    pieces.append(np.stack([s / 2 + r * np.cos(ang), r * np.sin(ang)], axis=1))

    xs2 = np.linspace(s / 2, -s / 2, n_straight, endpoint=False)
    pieces.append(np.stack([xs2, np.full_like(xs2, r)], axis=1))

    ang2 = np.linspace(np.pi / 2, 3 * np.pi / 2, n_arc, endpoint=False)
    pieces.append(np.stack([-s / 2 + r * np.cos(ang2), r * np.sin(ang2)], axis=1))

    pts = np.concatenate(pieces, axis=0)
    w = np.full(len(pts), width)
    return CenterlineTrack(points=pts, w_left=w, w_right=w)


def make_wiggle(base_radius=10.0, amplitude=0.55, lobes=6, width=0.85, spacing=0.15):
    """Wavy loop r(t) = R + A*sin(lobes*t): twelve alternating bends."""
    per_guess = 2 * np.pi * (base_radius + amplitude)
    n = max(128, int(per_guess / spacing))
    t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    r = base_radius + amplitude * np.sin(lobes * t)
    pts = np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
    w = np.full(n, width)
    return CenterlineTrack(points=pts, w_left=w, w_right=w)


SHIPPED_TRACKS = {
    "oval": make_oval,
    "stadium": make_stadium,
    "wiggle": make_wiggle,
}


def shipped_track(name, **kwargs):
    try:
        factory = SHIPPED_TRACKS[name]
    except KeyError:
        raise KeyError(f"unknown shipped track {name!r}; "
                       f"options: {sorted(SHIPPED_TRACKS)}") from None
    return factory(**kwargs)
