"""Single-track vehicle model: dynamic and kinematic branches plus RK4 stepping.

The dynamic branch covers |v| >= 0.1 m/s; below that the equations are
singular (1/v terms) and a kinematic single-track is used, with the yaw-rate
state pinned to v*tan(delta)/L and the slip angle decayed to zero.
"""

import math
from dataclasses import dataclass, replace

from .errors import ConfigError, IntegrationDivergedError, SingularSpeedError

# below this speed the dynamic model is singular and the kinematic branch is used
KINEMATIC_SPEED_CUTOFF = 0.1
# slip-angle relaxation time constant in the kinematic regime (s)
BETA_DECAY_TAU = 0.05
# speed floor applied inside RK4 sub-evaluations only, so a braking step that
# dips below the cutoff cannot blow up the 1/v terms
_SUBSTEP_SPEED_FLOOR = 0.05


@dataclass(frozen=True)
class DynamicState:
    """7-component single-track state: position, steering, speed, yaw, yaw rate, slip."""

    x: float = 0.0
    y: float = 0.0
    delta: float = 0.0
    v: float = 0.0
    theta: float = 0.0
    theta_dot: float = 0.0
    beta: float = 0.0

    def as_tuple(self):
        return (self.x, self.y, self.delta, self.v, self.theta, self.theta_dot, self.beta)

    @classmethod
    def from_tuple(cls, t):
        return cls(*t)


@dataclass(frozen=True)
class ControlDerivatives:
    """Rate-level inputs: steering-angle velocity (rad/s) and acceleration (m/s^2)."""

    v_delta: float
    a: float


@dataclass(frozen=True)
class VehicleParams:
    """Vehicle parameters, SI units. Defaults describe a generic 1:10 car."""

    m: float = 3.47
    l_f: float = 0.162
    l_r: float = 0.168
    h_cg: float = 0.074
    I_z: float = 0.047
    C_sf: float = 5.0
    C_sr: float = 5.0
    mu: float = 1.0
    g: float = 9.81
    a_max: float = 9.5
    v_max: float = 8.0
    delta_max: float = 0.4
    v_delta_max: float = 3.2
    width: float = 0.25
    # saturating proportional gains mapping (speed, steering) targets to rates
    k_delta: float = 20.0
    k_v: float = 15.0

    def __post_init__(self):
        positive = ["m", "l_f", "l_r", "h_cg", "I_z", "C_sf", "C_sr", "g",
                    "a_max", "v_max", "delta_max", "v_delta_max", "width",
                    "k_delta", "k_v"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"vehicle parameter {name} must be > 0")
        if not 0.0 < self.mu <= 1.2:
            raise ConfigError("mu must lie in (0, 1.2]")

    @property
    def L(self):
        return self.l_f + self.l_r

    @property
    def half_width(self):
        return 0.5 * self.width

    @classmethod
    def from_file(cls, path):
        """Load parameters from a plain-text key=value file (SI units).

        Unknown keys are rejected; omitted keys keep their defaults.
        """
        values = {}
        valid = set(cls.__dataclass_fields__)
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, val = (part.strip() for part in line.split("=", 1))
                if key not in valid:
                    raise ConfigError(f"{path}:{lineno}: unknown parameter {key!r}")
                try:
                    values[key] = float(val)
                except ValueError:
                    raise ConfigError(f"{path}:{lineno}: bad number {val!r}") from None
        return cls(**values)


def _dynamic_rates(s, u, p):
    """Raw dynamic single-track derivatives; no low-speed guard."""
    x, y, delta, v, theta, theta_dot, beta = s
    if abs(v) < _SUBSTEP_SPEED_FLOOR:
        v = math.copysign(_SUBSTEP_SPEED_FLOOR, v if v != 0.0 else 1.0)
    u1, u2 = u

    front = p.C_sf * (p.g * p.l_r - u2 * p.h_cg)
    rear = p.C_sr * (p.g * p.l_f + u2 * p.h_cg)
    L = p.l_r + p.l_f

    d_x = v * math.cos(theta + beta)
    d_y = v * math.sin(theta + beta)
    d_theta_dot = (p.mu * p.m / (p.I_z * L)) * (
        p.l_f * front * delta
        + (p.l_r * rear - p.l_f * front) * beta
        - (p.l_f ** 2 * front + p.l_r ** 2 * rear) * theta_dot / v
    )
    d_beta = (p.mu / (v * L)) * (
        front * delta
        - (rear + front) * beta
        + (rear * p.l_r - front * p.l_f) * theta_dot / v
    ) - theta_dot

    return (d_x, d_y, u1, u2, theta_dot, d_theta_dot, d_beta)


def _kinematic_rates(s, u, p):
    """Kinematic single-track derivatives, valid at all speeds."""
    x, y, delta, v, theta, theta_dot, beta = s
    u1, u2 = u
    L = p.L
    tan_d = math.tan(delta)
    cos_d = math.cos(delta)
    # chain rule keeps the yaw-rate state consistent with v*tan(delta)/L
    d_theta_dot = (u2 * tan_d + v * u1 / (cos_d * cos_d)) / L
    return (v * math.cos(theta), v * math.sin(theta), u1, u2, v * tan_d / L, d_theta_dot, 0.0)


def derivatives(state, u, p):
    """Dynamic-branch state derivatives as a 7-tuple.

    Raises SingularSpeedError below the 0.1 m/s cutoff; callers must route
    slow states to kinematic_derivatives.
    """
    if abs(state.v) < KINEMATIC_SPEED_CUTOFF:
        raise SingularSpeedError(
            f"dynamic branch needs |v| >= {KINEMATIC_SPEED_CUTOFF}, got {state.v}"
        )
    return _dynamic_rates(state.as_tuple(), (u.v_delta, u.a), p)


def kinematic_derivatives(state, u, p):
    """Kinematic-branch state derivatives as a 7-tuple."""
    return _kinematic_rates(state.as_tuple(), (u.v_delta, u.a), p)


def _rk4(f, s, u, p, dt):
    k1 = f(s, u, p)
    s2 = tuple(si + 0.5 * dt * ki for si, ki in zip(s, k1))
    k2 = f(s2, u, p)
    s3 = tuple(si + 0.5 * dt * ki for si, ki in zip(s, k2))
    k3 = f(s3, u, p)
    s4 = tuple(si + dt * ki for si, ki in zip(s, k3))
    k4 = f(s4, u, p)
    return tuple(
        si + dt / 6.0 * (a + 2.0 * b + 2.0 * c + d)
        for si, a, b, c, d in zip(s, k1, k2, k3, k4)
    )


def step(state, u, p, dt):
    """One RK4 step of the appropriate branch, with actuator clamping.

    The slip-angle dynamics stiffen like 1/v; just above the kinematic
    cutoff their eigenvalue exceeds RK4's stability bound at dt=0.01, so the
    slow band integrates in sub-steps. Deterministic; raises
    IntegrationDivergedError on non-finite output.
    """
    if not dt > 0:
        raise ConfigError("dt must be > 0")
    u1 = max(-p.v_delta_max, min(p.v_delta_max, u.v_delta))
    u2 = max(-p.a_max, min(p.a_max, u.a))
    uu = (u1, u2)

    s = state.as_tuple()
    kinematic = abs(state.v) < KINEMATIC_SPEED_CUTOFF
    n_sub = 1
    if not kinematic:
        v_eff = max(abs(state.v), KINEMATIC_SPEED_CUTOFF)
        lam = p.mu * (p.C_sf * p.g * p.l_r + p.C_sr * p.g * p.l_f) / (p.L * v_eff)
        n_sub = max(1, math.ceil(lam * dt / 0.8))
    try:
        nxt = s
        for _ in range(n_sub):
            nxt = _rk4(_kinematic_rates if kinematic else _dynamic_rates,
                       nxt, uu, p, dt / n_sub)
    except (ValueError, OverflowError) as exc:  # math domain blow-ups
        raise IntegrationDivergedError(state) from exc

    x, y, delta, v, theta, theta_dot, beta = nxt
    delta = max(-p.delta_max, min(p.delta_max, delta))
    v = max(0.0, min(p.v_max, v))
    if kinematic:
        theta_dot = v * math.tan(delta) / p.L
        beta = beta * math.exp(-dt / BETA_DECAY_TAU)

    out = DynamicState(x, y, delta, v, theta, theta_dot, beta)
    if not all(math.isfinite(c) for c in out.as_tuple()):
        raise IntegrationDivergedError(out)
    return out


def speed_steer_to_derivative_controls(target_v, target_delta, state, p):
    """Saturating proportional map from (speed, steering) targets to rate inputs."""
    if not (math.isfinite(target_v) and math.isfinite(target_delta)):
        raise ConfigError("planner targets must be finite")
    v_delta = p.k_delta * (target_delta - state.delta)
    a = p.k_v * (target_v - state.v)
    v_delta = max(-p.v_delta_max, min(p.v_delta_max, v_delta))
    a = max(-p.a_max, min(p.a_max, a))
    return ControlDerivatives(v_delta=v_delta, a=a)
