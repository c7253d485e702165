"""Pure-pursuit raceline tracking with speed-dependent lookahead.

Steering follows delta = arctan(L sin(phi) / l_d) toward a waypoint one
lookahead distance ahead; speed takes the raceline value capped by the
steering-dependent lateral-force limit sqrt(ratio_cap * g * L / tan|delta|).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .util import wrap_to_pi


@dataclass(frozen=True)
class PursuitParams:
    l_d0: float = 0.35    # constant lookahead (m)
    k_ld: float = 0.18    # speed-dependent lookahead gain (s)
    ratio_cap: float = 1.5  # lateral force-to-weight ratio limit
    # blend-in governor: hold catch_speed until the raceline is acquired
    # (random spawns sit up to a track half-width off the racing line)
    catch_speed: float = 2.5
    catch_tol: float = 0.25

    def __post_init__(self):
        if self.l_d0 <= 0 or self.k_ld < 0 or self.ratio_cap <= 0:
            raise ConfigError("bad pursuit parameters")
        if self.catch_speed <= 0 or self.catch_tol <= 0:
            raise ConfigError("bad pursuit blend-in parameters")


def closest_waypoint(pose, line, hint=None, window=40):
    """Index of the closest raceline waypoint; optionally warm-started."""
    pts = line.points
    n = len(pts)
    if hint is None:
        d2 = ((pts - pose[:2]) ** 2).sum(axis=1)
        return int(np.argmin(d2))
    idx = (hint + np.arange(-window, window + 1)) % n
    d2 = ((pts[idx] - pose[:2]) ** 2).sum(axis=1)
    return int(idx[int(np.argmin(d2))])


def lookahead_point(pose, line, l_d, start_idx=None):
    """First waypoint at arc distance >= l_d ahead of the closest waypoint.

    Returns (point, phi, closest_idx) with phi the relative bearing of the
    point in the vehicle frame, in (-pi, pi].
    """
    if line.n_points == 0:
        raise ConfigError("empty raceline")
    ci = closest_waypoint(pose, line, hint=start_idx)
    n = line.n_points
    length = line.length
    # walk forward (wrapping) until the accumulated arc reaches l_d
    target = ci
    acc = 0.0
    for _ in range(n):
        nxt = (target + 1) % n
        acc += (line.s[nxt] - line.s[target]) if nxt != 0 else (length - line.s[target])
        target = nxt
        if acc >= l_d:
            break
    tx, ty = line.x[target], line.y[target]
    phi = wrap_to_pi(math.atan2(ty - pose[1], tx - pose[0]) - pose[2])
    return np.array([tx, ty]), phi, ci


class PurePursuitPlanner:
    """Raceline-tracking planner for the episode engine.

    Episodes spawn on the centerline, which can be most of a half-width away
    from the racing line; until that gap closes once, the commanded speed is
    held at catch_speed so the blend-in stays docile.
    """

    name = "pp"

    def __init__(self, line, vehicle, params=None):
        self.line = line
        self.vehicle = vehicle
        self.params = params or PursuitParams()
        self._hint = None
        self._acquired = False

    def reset(self):
        self._hint = None
        self._acquired = False

    def plan(self, obs):
        v_cmd, delta_cmd, self._hint = pursuit_action(
            obs.pose, obs.speed, self.line, self.vehicle, self.params,
            hint=self._hint,
        )
        if not self._acquired:
            wp = self.line.points[self._hint]
            if math.hypot(wp[0] - obs.pose[0], wp[1] - obs.pose[1]) <= self.params.catch_tol:
                self._acquired = True
            else:
                v_cmd = min(v_cmd, self.params.catch_speed)
        return v_cmd, delta_cmd


def pursuit_action(pose, speed, line, vehicle, pp, hint=None):
    """One pure-pursuit step: (target_speed, target_delta, closest_idx)."""
    l_d = pp.l_d0 + pp.k_ld * speed
    _, phi, ci = lookahead_point(pose, line, l_d, start_idx=hint)
    delta = math.atan(vehicle.L * math.sin(phi) / l_d)
    delta = max(-vehicle.delta_max, min(vehicle.delta_max, delta))

    v_line = float(line.v[ci])
    tan_d = math.tan(abs(delta))
    if tan_d > 1e-12:
        cap = math.sqrt(pp.ratio_cap * vehicle.g * vehicle.L / tan_d)
        v_cmd = min(v_line, cap)
    else:
        v_cmd = v_line
    return v_cmd, delta, ci
