"""Episode engine: LiDAR ray casting, physics/planning loop, logging.

Physics advances at physics_hz; planners are queried every
physics_hz/control_hz steps and their action is held (zero-order hold) in
between. Episodes are fully reproducible from (seed, start_s).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics, kernels
from .errors import ConfigError, PlannerError, PoseInCollisionError
from .util import wrap_to_pi

TERMINAL_LAP = "lap_complete"
TERMINAL_CRASH = "crash"
TERMINAL_TIMEOUT = "timeout"


@dataclass(frozen=True)
class LidarScan:
    """One 2D scan: beam i points at theta - fov/2 + i*fov/(n_beams-1)."""

    ranges: np.ndarray
    fov: float
    max_range: float

    @property
    def n_beams(self):
        return len(self.ranges)

    def beam_bearings(self):
        """Bearings of all beams relative to the vehicle heading."""
        n = self.n_beams
        return -0.5 * self.fov + np.arange(n) * (self.fov / (n - 1))


@dataclass(frozen=True)
class SimConfig:
    physics_hz: int = 100
    control_hz: int = 25
    n_beams: int = 1080
    fov: float = 4.7
    max_range: float = 10.0
    lidar_noise_std: float = 0.01
    max_time_s: float = 60.0
    seed: int = 0

    def __post_init__(self):
        for name in ("physics_hz", "control_hz", "n_beams"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.physics_hz % self.control_hz != 0:
            raise ConfigError("physics_hz must be divisible by control_hz")
        if self.fov <= 0 or self.max_range <= 0 or self.max_time_s <= 0:
            raise ConfigError("fov, max_range and max_time_s must be positive")
        if self.lidar_noise_std < 0:
            raise ConfigError("lidar_noise_std must be >= 0")

    @property
    def substeps(self):
        return self.physics_hz // self.control_hz

    @property
    def dt_physics(self):
        return 1.0 / self.physics_hz

    @property
    def dt_control(self):
        return 1.0 / self.control_hz


def cast_scan(pose, df, config, rng=None, noise=True):
    """Simulate one LiDAR scan from a world pose on a distance field.

    Raises PoseInCollisionError when the pose itself has zero clearance.
    Gaussian range noise (std config.lidar_noise_std) is added when a
    generator is supplied and noise is enabled; ranges stay in (0, max_range].
    """
    x, y, theta = pose[0], pose[1], pose[2]
    if df.value_at(x, y) <= 0.0:
        raise PoseInCollisionError(f"scan requested from occupied pose ({x}, {y})")
    n = config.n_beams
    angles = theta - 0.5 * config.fov + np.arange(n) * (config.fov / (n - 1))
    ranges = kernels.march_rays(
        df.values, df.resolution, df.origin, x, y, angles, config.max_range
    )
    if noise and rng is not None and config.lidar_noise_std > 0:
        ranges = ranges + rng.normal(0.0, config.lidar_noise_std, size=n)
    np.clip(ranges, 1e-6, config.max_range, out=ranges)
    return LidarScan(ranges=ranges, fov=config.fov, max_range=config.max_range)


def progress_of(pose, param):
    """Arc length of the closest centerline point (raw, in [0, L))."""
    s, _ = param.project(pose[0], pose[1])
    return s


class ProgressTracker:
    """Unwraps centerline progress monotonically across the start line."""

    def __init__(self, param, start_s):
        self.param = param
        self.start_s = float(start_s)
        self._last_raw = float(start_s)
        self.progress = 0.0

    def update(self, pose):
        raw = progress_of(pose, self.param)
        delta = raw - self._last_raw
        half = 0.5 * self.param.length
        delta = (delta + half) % self.param.length - half
        self._last_raw = raw
        self.progress += delta
        return self.progress

    @property
    def s_unwrapped(self):
        return self.start_s + self.progress


@dataclass
class EpisodeRecord:
    """Per-control-step log of an episode plus its terminal summary."""

    control_hz: float
    t: list = field(default_factory=list)
    states: list = field(default_factory=list)        # DynamicState per step
    est_poses: list = field(default_factory=list)     # (x, y, theta) or None
    actions: list = field(default_factory=list)       # (speed, steer) targets
    scans: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    progress: list = field(default_factory=list)      # unwrapped meters
    terminal: str = ""
    track_length: float = float("nan")
    final_state: object = None
    final_progress: float = 0.0

    @property
    def n_steps(self):
        return len(self.t)

    @property
    def lap_time(self):
        """Simulated seconds to terminal; meaningful for completed laps."""
        return self.n_steps / self.control_hz

    @property
    def progress_fraction(self):
        return min(1.0, max(0.0, self.final_progress / self.track_length))

    def summary(self):
        return {
            "terminal": self.terminal,
            "lap_time_s": self.lap_time if self.terminal == TERMINAL_LAP else float("nan"),
            "progress_pct": 100.0 * self.progress_fraction,
            "steps": self.n_steps,
        }

    def to_csv(self, path, include_scans=False):
        """Write one row per control step plus a trailing summary comment.

        Scan beams are omitted unless include_scans is set (they dominate the
        file size); columns are then appended as beam_0..beam_{n-1}.
        """
        cols = ["step", "t_s", "x_m", "y_m", "theta_rad", "speed_mps", "steer_rad",
                "yawrate_radps", "slip_rad", "est_x_m", "est_y_m", "est_theta_rad",
                "pos_err_m", "action_speed_mps", "action_steer_rad", "reward",
                "progress_m"]
        if include_scans and self.scans:
            cols += [f"beam_{i}" for i in range(self.scans[0].n_beams)]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for i in range(self.n_steps):
                st = self.states[i]
                est = self.est_poses[i]
                if est is None:
                    ex = ey = eth = perr = float("nan")
                else:
                    ex, ey, eth = est
                    perr = math.hypot(ex - st.x, ey - st.y)
                row = [i, self.t[i], st.x, st.y, st.theta, st.v, st.delta,
                       st.theta_dot, st.beta, ex, ey, eth, perr,
                       self.actions[i][0], self.actions[i][1],
                       self.rewards[i], self.progress[i]]
                if include_scans and self.scans:
                    row += list(self.scans[i].ranges)
                fh.write(",".join(_fmt(v) for v in row) + "\n")
            s = self.summary()
            fh.write(f"# terminal={s['terminal']},lap_time_s={_fmt(s['lap_time_s'])},"
                     f"progress_pct={_fmt(s['progress_pct'])}\n")


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


class Simulation:
    """Step-wise episode engine; run_episode and the RL trainer drive it.

    One instance owns all mutable state for one episode at a time; separate
    instances are independent.
    """

    def __init__(self, param, df, vehicle, config):
        self.param = param
        self.df = df
        self.vehicle = vehicle
        self.config = config
        self.state = None
        self.tracker = None
        self.rng = None
        self.t = 0.0
        self.steps = 0
        self.terminal = ""

    def reset(self, start_s, rng, start_pose=None, start_speed=0.0):
        """Place the vehicle on the centerline at start_s facing Phi(start_s)."""
        if not 0.0 <= start_s < self.param.length:
            raise ConfigError("start_s must lie in [0, track length)")
        if start_pose is None:
            xy = self.param.xy_at(start_s)
            phi = self.param.phi_at(start_s)
            start_pose = (float(xy[0]), float(xy[1]), float(phi))
        self.state = dynamics.DynamicState(
            x=start_pose[0], y=start_pose[1], theta=start_pose[2], v=start_speed
        )
        self.rng = rng
        self.t = 0.0
        self.steps = 0
        self.terminal = ""
        self.tracker = ProgressTracker(self.param, progress_of(start_pose, self.param))
        if self.clearance() < self.vehicle.half_width:
            raise PoseInCollisionError("start pose has insufficient clearance")
        return self.observe()

    def clearance(self):
        return self.df.value_at(self.state.x, self.state.y)

    @property
    def pose(self):
        return np.array([self.state.x, self.state.y, self.state.theta])

    def observe(self):
        """Scan from the current true pose."""
        return cast_scan(self.pose, self.df, self.config, rng=self.rng)

    def step(self, action):
        """Hold (target_speed, target_steer) for one control period.

        Returns the terminal flag ('' while the episode is running).
        """
        if self.terminal:
            return self.terminal
        target_v, target_delta = action
        p = self.vehicle
        dt = self.config.dt_physics
        for _ in range(self.config.substeps):
            u = dynamics.speed_steer_to_derivative_controls(
                target_v, target_delta, self.state, p
            )
            self.state = dynamics.step(self.state, u, p, dt)
            self.t += dt
            if self.clearance() < p.half_width:
                self.terminal = TERMINAL_CRASH
                break
        self.steps += 1
        progress = self.tracker.update(self.pose)
        if not self.terminal:
            if progress >= self.param.length:
                self.terminal = TERMINAL_LAP
            elif self.t >= self.config.max_time_s - 0.5 * dt:
                self.terminal = TERMINAL_TIMEOUT
        return self.terminal


@dataclass(frozen=True)
class PlannerObs:
    """What a planner sees at a control step."""

    pose: np.ndarray  # estimated pose when a localizer is active, else true
    speed: float
    scan: LidarScan
    step: int


def run_episode(planner, param, df, vehicle, config, start_s, rng,
                localizer=None, reward_fn=None, start_pose=None,
                keep_scans=False):
    """Run one seeded episode and return its EpisodeRecord.

    The planner is any object with plan(PlannerObs) -> (speed, steer) and an
    optional reset(). When a localizer is given, the planner receives the
    estimated pose and the true pose is only logged.
    """
    sim = Simulation(param, df, vehicle, config)
    sim.reset(start_s, rng, start_pose=start_pose)
    if hasattr(planner, "reset"):
        planner.reset()
    if localizer is not None:
        localizer.reset(sim.pose, rng)

    record = EpisodeRecord(control_hz=config.control_hz,
                           track_length=param.length)
    last_action = (0.0, 0.0)
    while not sim.terminal:
        scan = sim.observe()
        if localizer is not None:
            est = localizer.update(last_action, config.dt_control, scan)
            planner_pose = np.array(est)
        else:
            est = None
            planner_pose = sim.pose
        obs = PlannerObs(pose=planner_pose, speed=sim.state.v, scan=scan,
                         step=sim.steps)
        try:
            action = planner.plan(obs)
        except Exception as exc:  # noqa: BLE001 - annotate and re-raise
            raise PlannerError(sim.steps, exc) from exc

        record.t.append(sim.t)
        record.states.append(sim.state)
        record.est_poses.append(tuple(est) if est is not None else None)
        record.actions.append((float(action[0]), float(action[1])))
        if keep_scans:
            record.scans.append(scan)
        record.progress.append(sim.tracker.progress)
        reward = reward_fn(sim) if reward_fn is not None else 0.0
        record.rewards.append(reward)

        sim.step(action)
        last_action = action

    record.terminal = sim.terminal
    record.final_state = sim.state
    record.final_progress = sim.tracker.progress
    return record
