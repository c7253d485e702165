"""Follow-the-gap with disparity-extender preprocessing.

Mapless reactive planner: extend range disparities by the vehicle width,
blank a bubble around the nearest reading, steer at the middle of the
longest free gap, and pick between two speeds on the steering magnitude.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class FtgConfig:
    bubble_radius: float = 0.3        # m, blanked arc around the nearest hit
    disparity_threshold: float = 0.3  # m, adjacent-range jump that counts
    safety_width: float = 0.35        # m, vehicle width plus margin
    gap_range_min: float = 1.2        # m, a beam must see at least this to join a gap
    fast_speed: float = 5.0           # m/s on near-straight steering
    slow_speed: float = 3.0           # m/s otherwise
    steer_threshold: float = 0.15     # rad, boundary between the two speeds

    def __post_init__(self):
        if not self.fast_speed > self.slow_speed > 0:
            raise ConfigError("need fast_speed > slow_speed > 0")
        for name in ("bubble_radius", "disparity_threshold", "safety_width",
                     "gap_range_min", "steer_threshold"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")


def extend_disparities(scan, config):
    """Overwrite the far side of each range disparity with the near range.

    The number of overwritten beams subtends safety_width at the near range,
    so gaps behind obstacle edges narrower than the vehicle disappear.
    Disparities are detected on the input ranges in a single pass.
    """
    ranges = np.asarray(scan.ranges, dtype=np.float64)
    out = ranges.copy()
    n = len(ranges)
    dtheta = scan.fov / (n - 1)
    for i in range(n - 1):
        a, b = ranges[i], ranges[i + 1]
        if abs(b - a) <= config.disparity_threshold:
            continue
        near = min(a, b)
        n_beams = math.ceil(config.safety_width / (near * dtheta))
        if b > a:
            lo, hi = i + 1, min(n, i + 1 + n_beams)
        else:
            lo, hi = max(0, i - n_beams + 1), i + 1
        np.minimum(out[lo:hi], near, out=out[lo:hi])
    return out


def _bubble_blank(ranges, fov, config):
    """Zero out beams within bubble_radius of arc around the minimum range.

    Disparity extension leaves ties at the minimum; centering on the tied
    span keeps the result mirror-symmetric.
    """
    out = ranges.copy()
    n = len(ranges)
    dtheta = fov / (n - 1)
    r_min = ranges.min()
    tied = np.nonzero(ranges == r_min)[0]
    half = config.bubble_radius / (max(r_min, 1e-6) * dtheta)
    # one bubble per contiguous block of tied minima (mirror-symmetric)
    blocks = np.split(tied, np.nonzero(np.diff(tied) > 1)[0] + 1)
    for block in blocks:
        center = 0.5 * (block[0] + block[-1])
        lo = max(0, math.ceil(center - half))
        hi = min(n - 1, math.floor(center + half))
        out[lo:hi + 1] = 0.0
    return out


def _best_gap(free):
    """Longest contiguous run of True; ties broken by the caller."""
    runs = []
    start = None
    for i, f in enumerate(free):
        if f and start is None:
            start = i
        elif not f and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(free) - 1))
    return runs


def ftg_action(scan, config, delta_max=0.4):
    """(target_speed, target_delta, info) from one scan.

    Returns the emergency action (0, 0) with info['emergency'] set when no
    gap clears gap_range_min after preprocessing.
    """
    processed = extend_disparities(scan, config)
    blanked = _bubble_blank(processed, scan.fov, config)
    free = blanked > config.gap_range_min
    runs = _best_gap(free)
    if not runs:
        return 0.0, 0.0, {"emergency": True}

    widths = np.array([hi - lo for lo, hi in runs])
    best_width = widths.max()
    candidates = [r for r, w in zip(runs, widths) if w == best_width]
    if len(candidates) > 1:
        means = [blanked[lo:hi + 1].mean() for lo, hi in candidates]
        lo, hi = candidates[int(np.argmax(means))]
    else:
        lo, hi = candidates[0]

    n = scan.n_beams
    dtheta = scan.fov / (n - 1)
    mid_index = 0.5 * (lo + hi)
    bearing = -0.5 * scan.fov + mid_index * dtheta
    delta = max(-delta_max, min(delta_max, bearing))
    speed = config.fast_speed if abs(delta) < config.steer_threshold else config.slow_speed
    info = {
        "emergency": False,
        "gap": (lo, hi),
        "gap_min_range": float(blanked[lo:hi + 1].min()),
    }
    return speed, delta, info


class FollowTheGapPlanner:
    """Scan-only planner for the episode engine."""

    name = "ftg"

    def __init__(self, config=None, vehicle=None):
        self.config = config or FtgConfig()
        self.delta_max = vehicle.delta_max if vehicle is not None else 0.4
        self.last_info = None

    def reset(self):
        self.last_info = None

    def plan(self, obs):
        speed, delta, info = ftg_action(obs.scan, self.config, self.delta_max)
        self.last_info = info
        return speed, delta
