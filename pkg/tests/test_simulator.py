import math

import numpy as np
import pytest

from racebench.dynamics import VehicleParams
from racebench.errors import ConfigError, PlannerError, PoseInCollisionError
from racebench.pursuit import PurePursuitPlanner
from racebench.raceline import centerline_raceline
from racebench.simulator import (
    ProgressTracker,
    SimConfig,
    Simulation,
    cast_scan,
    progress_of,
    run_episode,
)
from racebench.track import DistanceField, OccupancyGrid


def room_df(half=5.0, res=0.05, wall=3):
    n = int(round(2 * half / res)) + 2 * wall
    occ = np.zeros((n, n), dtype=bool)
    occ[:wall, :] = occ[-wall:, :] = occ[:, :wall] = occ[:, -wall:] = True
    origin = (-half - wall * res, -half - wall * res, 0.0)
    grid = OccupancyGrid(resolution=res, origin=origin, cells=occ)
    return DistanceField.from_grid(grid)


class StationaryPlanner:
    name = "stationary"

    def plan(self, obs):
        return 0.0, 0.0


class FullSpeedAhead:
    name = "wall-seeker"

    def plan(self, obs):
        return 8.0, 0.0


class ExplodingPlanner:
    name = "broken"

    def plan(self, obs):
        raise RuntimeError("boom")


def test_sim_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(physics_hz=100, control_hz=30)  # not divisible
    with pytest.raises(ConfigError):
        SimConfig(max_range=-1.0)
    assert SimConfig().substeps == 4


def test_cast_scan_square_room():
    df = room_df()
    cfg = SimConfig(n_beams=5, fov=math.pi, max_range=30.0, lidar_noise_std=0.0)
    scan = cast_scan(np.array([0.0, 0.0, 0.0]), df, cfg)
    # beams at -90, -45, 0, +45, +90 degrees
    assert abs(scan.ranges[2] - 5.0) <= df.resolution
    assert abs(scan.ranges[1] - 5.0 * math.sqrt(2)) <= df.resolution
    assert abs(scan.ranges[3] - 5.0 * math.sqrt(2)) <= df.resolution


def test_cast_scan_clips_to_max_range():
    df = room_df()
    cfg = SimConfig(n_beams=3, fov=0.2, max_range=3.0, lidar_noise_std=0.0)
    scan = cast_scan(np.array([0.0, 0.0, 0.0]), df, cfg)
    assert (scan.ranges == 3.0).all()


def test_cast_scan_pose_in_collision():
    df = room_df()
    cfg = SimConfig()
    with pytest.raises(PoseInCollisionError):
        cast_scan(np.array([5.5, 0.0, 0.0]), df, cfg)


def test_cast_scan_noise_reproducible():
    df = room_df()
    cfg = SimConfig(n_beams=20, lidar_noise_std=0.05)
    a = cast_scan(np.array([0.0, 0.0, 0.0]), df, cfg, rng=np.random.default_rng(3))
    b = cast_scan(np.array([0.0, 0.0, 0.0]), df, cfg, rng=np.random.default_rng(3))
    np.testing.assert_array_equal(a.ranges, b.ranges)
    assert (a.ranges > 0).all()


def test_scan_mirror_symmetry():
    df = room_df()
    cfg = SimConfig(n_beams=41, fov=4.0, max_range=30.0, lidar_noise_std=0.0)
    scan = cast_scan(np.array([1.3, 0.0, 0.0]), df, cfg)
    np.testing.assert_allclose(scan.ranges, scan.ranges[::-1], atol=df.resolution)


def test_progress_of_on_centerline(oval_bundle):
    _, param, _, _ = oval_bundle
    xy = param.xy_at(12.5)
    assert progress_of((float(xy[0]), float(xy[1])), param) == pytest.approx(12.5, abs=1e-6)


def test_progress_of_lateral_offset(oval_bundle):
    _, param, _, _ = oval_bundle
    xy = param.xy_at(12.5)
    phi = param.phi_at(12.5)
    pose = (float(xy[0]) - 0.3 * math.sin(phi), float(xy[1]) + 0.3 * math.cos(phi))
    assert progress_of(pose, param) == pytest.approx(12.5, abs=0.05)


def test_progress_tracker_unwraps(oval_bundle):
    _, param, _, _ = oval_bundle
    tracker = ProgressTracker(param, param.length - 1.0)
    # walk across the start line
    for ds in np.linspace(0.0, 3.0, 16):
        s = param.length - 1.0 + ds
        xy = param.xy_at(s)
        tracker.update((float(xy[0]), float(xy[1])))
    assert tracker.progress == pytest.approx(3.0, abs=0.05)
    assert tracker.s_unwrapped > param.length


def test_run_episode_stationary_times_out(oval_bundle, vehicle):
    _, param, _, df = oval_bundle
    cfg = SimConfig(max_time_s=2.0)
    rec = run_episode(StationaryPlanner(), param, df, vehicle, cfg, 0.0,
                      np.random.default_rng(0))
    assert rec.terminal == "timeout"
    assert rec.final_progress == pytest.approx(0.0, abs=0.05)


def test_run_episode_crash_against_wall(oval_bundle, vehicle):
    _, param, _, df = oval_bundle
    cfg = SimConfig(max_time_s=20.0)
    rec = run_episode(FullSpeedAhead(), param, df, vehicle, cfg, 0.0,
                      np.random.default_rng(0))
    assert rec.terminal == "crash"
    fs = rec.final_state
    # crash pose clearance is below half-width by the detection rule
    assert df.value_at(fs.x, fs.y) < vehicle.half_width


def test_run_episode_lap_and_kinematic_consistency(stadium_bundle, vehicle):
    track, param, _, df = stadium_bundle
    line = centerline_raceline(track, v=2.0)
    cfg = SimConfig(max_time_s=60.0)
    rec = run_episode(PurePursuitPlanner(line, vehicle), param, df, vehicle, cfg,
                      0.0, np.random.default_rng(0))
    assert rec.terminal == "lap_complete"
    mean_speed = np.mean([s.v for s in rec.states])
    expected = param.length / mean_speed
    assert rec.lap_time == pytest.approx(expected, abs=cfg.dt_control * 25)


def test_run_episode_determinism(stadium_bundle, vehicle):
    track, param, _, df = stadium_bundle
    line = centerline_raceline(track, v=2.0)
    cfg = SimConfig(max_time_s=30.0)
    recs = []
    for _ in range(2):
        rec = run_episode(PurePursuitPlanner(line, vehicle), param, df, vehicle,
                          cfg, 5.0, np.random.default_rng(42))
        recs.append(rec)
    a, b = recs
    assert a.terminal == b.terminal
    assert a.n_steps == b.n_steps
    for sa, sb in zip(a.states, b.states):
        assert sa.as_tuple() == sb.as_tuple()


def test_recorded_poses_have_clearance(stadium_bundle, vehicle):
    track, param, _, df = stadium_bundle
    line = centerline_raceline(track, v=2.0)
    cfg = SimConfig(max_time_s=30.0)
    rec = run_episode(PurePursuitPlanner(line, vehicle), param, df, vehicle, cfg,
                      0.0, np.random.default_rng(1))
    for st in rec.states:
        assert df.value_at(st.x, st.y) >= vehicle.half_width


def test_zero_order_hold_interleaving(oval_bundle, vehicle):
    _, param, _, df = oval_bundle
    cfg = SimConfig(max_time_s=1.0)

    calls = []

    class CountingPlanner:
        def plan(self, obs):
            calls.append(obs.step)
            return 1.0, 0.0

    sim_steps = int(cfg.max_time_s * cfg.control_hz)
    rec = run_episode(CountingPlanner(), param, df, vehicle, cfg, 0.0,
                      np.random.default_rng(0))
    # one planner query per control period, physics time advances in lockstep
    assert len(calls) == rec.n_steps
    assert rec.n_steps == pytest.approx(sim_steps, abs=1)
    dt = np.diff(rec.t)
    np.testing.assert_allclose(dt, cfg.dt_control, atol=1e-9)


def test_planner_exception_wrapped(oval_bundle, vehicle):
    _, param, _, df = oval_bundle
    cfg = SimConfig(max_time_s=2.0)
    with pytest.raises(PlannerError) as err:
        run_episode(ExplodingPlanner(), param, df, vehicle, cfg, 0.0,
                    np.random.default_rng(0))
    assert err.value.step_index == 0


def test_episode_record_csv(tmp_path, stadium_bundle, vehicle):
    track, param, _, df = stadium_bundle
    line = centerline_raceline(track, v=2.0)
    cfg = SimConfig(max_time_s=5.0)
    rec = run_episode(PurePursuitPlanner(line, vehicle), param, df, vehicle, cfg,
                      0.0, np.random.default_rng(0), keep_scans=True)
    path = tmp_path / "ep.csv"
    rec.to_csv(path)
    lines = path.read_text().strip().split("\n")
    assert lines[0].startswith("step,t_s,x_m")
    assert len(lines) == rec.n_steps + 2  # header + rows + summary comment
    assert lines[-1].startswith("# terminal=")
    # scans variant appends beam columns
    rec.to_csv(tmp_path / "ep_scans.csv", include_scans=True)
    header = (tmp_path / "ep_scans.csv").read_text().split("\n")[0]
    assert "beam_0" in header and f"beam_{cfg.n_beams - 1}" in header


def test_start_pose_override(oval_bundle, vehicle):
    _, param, _, df = oval_bundle
    sim = Simulation(param, df, vehicle, SimConfig(max_time_s=5.0))
    xy = param.xy_at(3.0)
    phi = param.phi_at(3.0)
    pose = (float(xy[0]), float(xy[1]) + 0.2, float(phi))
    sim.reset(3.0, np.random.default_rng(0), start_pose=pose)
    assert sim.state.y == pytest.approx(pose[1])
