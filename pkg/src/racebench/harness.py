"""Experiment engine: seeded lap batches, metric summaries, sweeps, studies.

Planner tuning used throughout the benchmarks (validated on the shipped
tracks; all values overridable per run):
  * pure pursuit tracks a raceline optimised with margin 0.40 and a speed
    profile planned at 0.65*mu with the top speed scaled by sqrt(mu/0.9);
  * MPCC plans with mu scaled by 0.42, tube margin 0.65, same top-speed rule;
  * follow-the-gap uses a 0.10 rad steering threshold for its speed switch.
"""

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import VehicleParams
from .errors import ConfigError
from .ftg import FollowTheGapPlanner, FtgConfig
from .localization import ParticleFilter, PfConfig
from .mpcc import MpccParams, MpccPlanner
from .pursuit import PurePursuitPlanner, PursuitParams
from .raceline import build_raceline, centerline_raceline
from .rl import AgentPlanner, load_checkpoint, save_checkpoint, train, TrainConfig
from .simulator import (
    TERMINAL_LAP,
    SimConfig,
    run_episode,
)
from .track import (
    distance_field,
    grid_from_centerline,
    load_centerline,
    parameterize,
    track_stats,
)
from .tracks import SHIPPED_TRACKS, shipped_track

PLANNER_IDS = ("pp", "mpcc", "ftg", "e2e")
POSE_SOURCES = ("true", "pf")

PP_MARGIN = 0.40
PP_MU_SCALE = 0.65
MPCC_MARGIN = 0.65
MPCC_MU_SCALE = 0.45
FTG_STEER_THRESHOLD = 0.08
REFERENCE_MU = 0.9
TIMEOUT_FACTOR = 2.5


@dataclass(frozen=True)
class RunConfig:
    planner: str = "pp"
    track: str = "oval"            # shipped name or centerline CSV path
    n_laps: int = 10
    seed: int = 0
    mu: float = 0.9
    control_hz: int = 25
    pose_source: str = "true"
    particles: int = 1000
    checkpoint: str = ""           # e2e only
    lidar_noise_std: float = 0.01
    vehicle_config: str = ""       # key=value file overriding vehicle params
    horizon_dump: str = ""         # mpcc only: per-solve horizon CSV

    def __post_init__(self):
        if self.planner not in PLANNER_IDS:
            raise ConfigError(f"unknown planner {self.planner!r}; options {PLANNER_IDS}")
        if self.pose_source not in POSE_SOURCES:
            raise ConfigError(f"unknown pose source {self.pose_source!r}")
        if not 0.3 <= self.mu <= 1.2:
            raise ConfigError("mu must lie in [0.3, 1.2]")
        if self.n_laps < 1:
            raise ConfigError("n_laps must be >= 1")
        if self.planner == "e2e" and not self.checkpoint:
            raise ConfigError("e2e runs need --checkpoint")


@dataclass
class TrackBundle:
    """Everything derived from one centerline: parameterization, grid, field."""

    name: str
    track: object
    param: object
    grid: object
    df: object

    @classmethod
    def load(cls, spec, resolution=0.05):
        if spec in SHIPPED_TRACKS:
            track = shipped_track(spec)
            name = spec
        else:
            if not os.path.exists(spec):
                raise ConfigError(f"track {spec!r} is neither shipped nor a file")
            track = load_centerline(spec)
            name = os.path.splitext(os.path.basename(spec))[0]
        param = parameterize(track)
        grid = grid_from_centerline(track, resolution=resolution)
        return cls(name=name, track=track, param=param, grid=grid,
                   df=distance_field(grid))


def plan_vehicle(vehicle, mu):
    """Vehicle copy used for planning: grip-derated top speed."""
    v_plan = min(vehicle.v_max, vehicle.v_max * math.sqrt(mu / REFERENCE_MU))
    return replace(vehicle, mu=mu, v_max=v_plan)


def make_planner(config, bundle, vehicle):
    """Instantiate the planner named by a RunConfig."""
    if config.planner == "pp":
        plan_p = plan_vehicle(vehicle, config.mu)
        line, _ = build_raceline(bundle.track, vehicle, margin=PP_MARGIN,
                                 mu=config.mu * PP_MU_SCALE, v_max=plan_p.v_max)
        return PurePursuitPlanner(line, vehicle)
    if config.planner == "mpcc":
        plan_p = replace(vehicle, mu=config.mu * MPCC_MU_SCALE,
                         v_max=plan_vehicle(vehicle, config.mu).v_max)
        return MpccPlanner(bundle.param, plan_p, MpccParams(margin=MPCC_MARGIN),
                           horizon_dump=config.horizon_dump or None)
    if config.planner == "ftg":
        return FollowTheGapPlanner(FtgConfig(steer_threshold=FTG_STEER_THRESHOLD),
                                   vehicle)
    if config.planner == "e2e":
        agent = load_checkpoint(config.checkpoint)
        return AgentPlanner(agent, vehicle)
    raise ConfigError(f"unknown planner {config.planner!r}")


def reference_lap_time(bundle, vehicle, mu):
    """Pure-pursuit flying reference used to scale episode timeouts."""
    plan_p = plan_vehicle(vehicle, mu)
    line, _ = build_raceline(bundle.track, vehicle, margin=PP_MARGIN,
                             mu=mu * PP_MU_SCALE, v_max=plan_p.v_max)
    return bundle.param.length / max(float(line.v.mean()), 0.5)


def sim_config_for(config, bundle, vehicle):
    ref = reference_lap_time(bundle, vehicle, config.mu)
    return SimConfig(
        control_hz=config.control_hz,
        lidar_noise_std=config.lidar_noise_std,
        max_time_s=TIMEOUT_FACTOR * ref + 10.0,
        seed=config.seed,
    )


def draw_starts(seed, length, n_laps):
    """Start positions shared by every planner for a given seed."""
    rng = np.random.default_rng([seed, 0xA11CE])
    return rng.uniform(0.0, length, size=n_laps)


def episode_rng(seed, run_index):
    return np.random.default_rng([seed, run_index])


@dataclass
class BenchmarkSummary:
    planner: str
    track: str
    mu: float
    pose_source: str
    control_hz: int
    n_laps: int
    lap_times: list
    completions: list
    progresses: list
    start_positions: list

    @property
    def completion_rate(self):
        return 100.0 * sum(self.completions) / len(self.completions)

    @property
    def mean_lap_time(self):
        done = [t for t, c in zip(self.lap_times, self.completions) if c]
        return float(np.mean(done)) if done else float("nan")

    @property
    def mean_progress(self):
        return float(np.mean(self.progresses))

    def detail_rows(self):
        for i in range(self.n_laps):
            yield {
                "lap": i,
                "start_s_m": self.start_positions[i],
                "terminal": "lap_complete" if self.completions[i] else "dnf",
                "lap_time_s": self.lap_times[i] if self.completions[i] else float("nan"),
                "progress_pct": self.progresses[i],
            }

    def summary_row(self):
        return {
            "planner": self.planner,
            "track": self.track,
            "mu": self.mu,
            "pose_source": self.pose_source,
            "control_hz": self.control_hz,
            "n_laps": self.n_laps,
            "completion_rate_pct": self.completion_rate,
            "mean_lap_time_s": self.mean_lap_time,
            "mean_progress_pct": self.mean_progress,
        }


def run_benchmark(config, bundle=None, vehicle=None, keep_records=False):
    """Seeded lap batch for one (planner, track) cell."""
    bundle = bundle or TrackBundle.load(config.track)
    if vehicle is None:
        if config.vehicle_config:
            vehicle = VehicleParams.from_file(config.vehicle_config)
        else:
            vehicle = VehicleParams(mu=config.mu)
    if vehicle.mu != config.mu:
        vehicle = replace(vehicle, mu=config.mu)
    sim_cfg = sim_config_for(config, bundle, vehicle)
    starts = draw_starts(config.seed, bundle.param.length, config.n_laps)
    planner = make_planner(config, bundle, vehicle)

    lap_times, completions, progresses, records = [], [], [], []
    for i, start_s in enumerate(starts):
        rng = episode_rng(config.seed, i)
        localizer = None
        if config.pose_source == "pf":
            localizer = ParticleFilter(bundle.df, vehicle,
                                       PfConfig(n_particles=config.particles))
        record = run_episode(planner, bundle.param, bundle.df, vehicle, sim_cfg,
                             float(start_s), rng, localizer=localizer)
        done = record.terminal == TERMINAL_LAP
        completions.append(done)
        lap_times.append(record.lap_time if done else float("nan"))
        progresses.append(100.0 * record.progress_fraction)
        if keep_records:
            records.append(record)

    summary = BenchmarkSummary(
        planner=config.planner, track=bundle.name, mu=config.mu,
        pose_source=config.pose_source, control_hz=config.control_hz,
        n_laps=config.n_laps, lap_times=lap_times, completions=completions,
        progresses=progresses, start_positions=list(map(float, starts)),
    )
    return (summary, records) if keep_records else summary


def friction_sweep(planners, track, mus, pose_sources, control_hzs=(25,),
                   n_laps=10, seed=0, particles=1000):
    """Cross product of (planner, mu, pose, hz); returns summary list."""
    bundle = TrackBundle.load(track)
    out = []
    for planner in planners:
        for mu in mus:
            for pose in pose_sources:
                for hz in control_hzs:
                    cfg = RunConfig(planner=planner, track=track, n_laps=n_laps,
                                    seed=seed, mu=mu, control_hz=hz,
                                    pose_source=pose, particles=particles)
                    out.append(run_benchmark(cfg, bundle=bundle))
    return out


def localisation_report(track, particle_counts, seed=0, speed=2.0, beams_off=False):
    """Constant-speed centerline lap per particle count; error and timing."""
    bundle = TrackBundle.load(track)
    vehicle = VehicleParams(mu=REFERENCE_MU)
    line = centerline_raceline(bundle.track, v=speed)
    sim_cfg = SimConfig(max_time_s=bundle.param.length / speed * 2.0, seed=seed)
    rows = []
    per_step_logs = {}
    for count in particle_counts:
        planner = PurePursuitPlanner(line, vehicle)
        localizer = _TimedFilter(bundle.df, vehicle, PfConfig(n_particles=count))
        rng = episode_rng(seed, count)
        record = run_episode(planner, bundle.param, bundle.df, vehicle, sim_cfg,
                             0.0, rng, localizer=localizer)
        errs = []
        log = []
        for state, est in zip(record.states, record.est_poses):
            if est is None:
                continue
            err = math.hypot(state.x - est[0], state.y - est[1])
            errs.append(err)
            log.append((state.x, state.y, state.theta, est[0], est[1], est[2], err))
        rows.append({
            "particles": count,
            "mean_error_m": float(np.mean(errs)),
            "max_error_m": float(np.max(errs)),
            "mean_update_ms": 1000.0 * localizer.total_time / max(localizer.updates, 1),
            "terminal": record.terminal,
        })
        per_step_logs[count] = log
    return rows, per_step_logs


class _TimedFilter(ParticleFilter):
    """Particle filter wrapper that accumulates wall-clock update time."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.total_time = 0.0
        self.updates = 0

    def update(self, action, dt, scan):
        t0 = time.perf_counter()
        est = super().update(action, dt, scan)
        self.total_time += time.perf_counter() - t0
        self.updates += 1
        return est


def train_agent(track, reward_kind, steps, seed, out_path, mu=REFERENCE_MU,
                progress_cb=None):
    """Train one agent on a shipped or user track; saves a checkpoint."""
    bundle = TrackBundle.load(track)
    vehicle = VehicleParams(mu=mu)
    plan_p = plan_vehicle(vehicle, mu)
    line, _ = build_raceline(bundle.track, vehicle, margin=PP_MARGIN,
                             mu=mu * PP_MU_SCALE, v_max=plan_p.v_max)
    classical = PurePursuitPlanner(line, vehicle)
    sim_cfg = SimConfig(max_time_s=1e9, seed=seed)
    agent, curve = train(bundle.param, bundle.df, vehicle, sim_cfg, reward_kind,
                         seed, train_config=TrainConfig(steps=steps),
                         classical_planner=classical if reward_kind == "tal" else None,
                         progress_cb=progress_cb)
    if out_path:
        save_checkpoint(agent, out_path, extra={
            "track": bundle.name, "reward": reward_kind,
            "steps": steps, "seed": seed,
        })
    return agent, curve


def reward_study(train_tracks, reward_kinds, seeds, steps, test_tracks=None,
                 out_dir=None, n_eval_laps=5, progress_cb=None):
    """Train seeds x rewards x maps, cross-evaluate on all test maps."""
    test_tracks = test_tracks or train_tracks
    results = []
    curves = {}
    for track in train_tracks:
        for kind in reward_kinds:
            for seed in seeds:
                tag = f"{track}_{kind}_s{seed}"
                ckpt = os.path.join(out_dir, f"agent_{tag}.ckpt") if out_dir else ""
                agent, curve = train_agent(track, kind, steps, seed, ckpt,
                                           progress_cb=progress_cb)
                curves[tag] = curve
                for test in test_tracks:
                    bundle = TrackBundle.load(test)
                    vehicle = VehicleParams(mu=REFERENCE_MU)
                    planner = AgentPlanner(agent, vehicle)
                    sim_cfg = sim_config_for(
                        RunConfig(planner="ftg", track=test), bundle, vehicle)
                    starts = draw_starts(seed, bundle.param.length, n_eval_laps)
                    comp, prog = [], []
                    for i, ss in enumerate(starts):
                        rec = run_episode(planner, bundle.param, bundle.df, vehicle,
                                          sim_cfg, float(ss), episode_rng(seed, 1000 + i))
                        comp.append(rec.terminal == TERMINAL_LAP)
                        prog.append(100.0 * rec.progress_fraction)
                    results.append({
                        "train_track": track, "reward": kind, "seed": seed,
                        "test_track": bundle.name,
                        "completion_rate_pct": 100.0 * sum(comp) / len(comp),
                        "mean_progress_pct": float(np.mean(prog)),
                    })
    return results, curves


def stats_rows(tracks):
    """Track characteristic table as dict rows."""
    rows = []
    for spec in tracks:
        bundle = TrackBundle.load(spec)
        st = track_stats(bundle.param)
        rows.append({
            "track": bundle.name,
            "length_m": st.length,
            "straight_pct": st.straight_pct,
            "corner_count": st.corner_count,
        })
    return rows


# ---------------------------------------------------------------------------
# output artifacts
# ---------------------------------------------------------------------------

def write_csv(path, rows, columns=None):
    rows = list(rows)
    if not rows:
        with open(path, "w") as fh:
            fh.write("\n")
        return
    columns = columns or list(rows[0].keys())
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(row[c]) for c in columns) + "\n")


def _csv_cell(v):
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def config_hash(config):
    """Stable hash of a run configuration (dataclass or dict)."""
    if hasattr(config, "__dataclass_fields__"):
        payload = {k: getattr(config, k) for k in config.__dataclass_fields__}
    else:
        payload = dict(config)
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


class Manifest:
    """Records every artifact written under the output directory.

    Wall-clock timing artifacts are listed but excluded from hashing so a
    rerun with identical seeds produces an identical manifest.
    """

    def __init__(self, out_dir, run_config=None):
        self.out_dir = out_dir
        self.entries = {}
        self.config_hash = config_hash(run_config) if run_config is not None else ""
        os.makedirs(out_dir, exist_ok=True)

    def add(self, path, hashed=True):
        rel = os.path.relpath(path, self.out_dir)
        entry = {"hashed": bool(hashed)}
        if hashed:
            with open(path, "rb") as fh:
                entry["sha256"] = hashlib.sha256(fh.read()).hexdigest()
        self.entries[rel] = entry

    def write(self):
        path = os.path.join(self.out_dir, "manifest.json")
        payload = {
            "config_hash": self.config_hash,
            "artifacts": {k: self.entries[k] for k in sorted(self.entries)},
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def load_and_check_summary(summary_csv, detail_csv):
    """Re-derive summary metrics from the detail rows and assert equality."""
    import csv

    with open(summary_csv) as fh:
        summary = list(csv.DictReader(fh))
    with open(detail_csv) as fh:
        details = list(csv.DictReader(fh))
    for srow in summary:
        key = (srow["planner"], srow["track"], srow["mu"], srow["pose_source"],
               srow["control_hz"])
        mine = [d for d in details if (d["planner"], d["track"], d["mu"],
                                       d["pose_source"], d["control_hz"]) == key]
        if not mine:
            raise ConfigError(f"summary row {key} has no detail rows")
        comp = [d["terminal"] == "lap_complete" for d in mine]
        rate = 100.0 * sum(comp) / len(comp)
        if abs(rate - float(srow["completion_rate_pct"])) > 1e-9:
            raise ConfigError(f"completion rate mismatch for {key}")
        done = [float(d["lap_time_s"]) for d, c in zip(mine, comp) if c]
        mean = float(np.mean(done)) if done else float("nan")
        stated = float(srow["mean_lap_time_s"])
        if done and abs(mean - stated) > 1e-9:
            raise ConfigError(f"lap time mismatch for {key}")
        prog = float(np.mean([float(d["progress_pct"]) for d in mine]))
        if abs(prog - float(srow["mean_progress_pct"])) > 1e-9:
            raise ConfigError(f"progress mismatch for {key}")
    return summary, details
