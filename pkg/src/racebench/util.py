"""Small shared geometry helpers."""

import math

import numpy as np


def wrap_to_pi(angle):
    """Wrap an angle (scalar or array) to (-pi, pi]."""
    wrapped = -((-np.asarray(angle) + np.pi) % (2.0 * np.pi) - np.pi)
    if np.isscalar(angle) or np.ndim(angle) == 0:
        return float(wrapped)
    return wrapped


def rot2d(angle):
    """2x2 rotation matrix."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def clamp(value, lo, hi):
    return max(lo, min(hi, value))
