import math

import numpy as np
import pytest

from racebench.errors import ConfigError
from racebench.ftg import FtgConfig, extend_disparities, ftg_action
from racebench.simulator import LidarScan

CFG = FtgConfig()


def make_scan(ranges, fov=4.7, max_range=10.0):
    return LidarScan(ranges=np.asarray(ranges, dtype=np.float64), fov=fov,
                     max_range=max_range)


def test_config_validation():
    with pytest.raises(ConfigError):
        FtgConfig(fast_speed=2.0, slow_speed=3.0)
    with pytest.raises(ConfigError):
        FtgConfig(bubble_radius=0.0)


def test_uniform_scan_unchanged():
    scan = make_scan(np.full(100, 4.0))
    out = extend_disparities(scan, CFG)
    np.testing.assert_array_equal(out, scan.ranges)


def test_step_disparity_extension_count():
    n = 200
    ranges = np.full(n, 5.0)
    k = 80
    ranges[:k + 1] = 1.0  # step up at beam k -> k+1
    scan = make_scan(ranges)
    out = extend_disparities(scan, CFG)
    dtheta = scan.fov / (n - 1)
    n_ext = math.ceil(CFG.safety_width / (1.0 * dtheta))
    # beams k+1 .. k+n_ext overwritten with the nearer range
    np.testing.assert_array_equal(out[k + 1:k + 1 + n_ext], 1.0)
    assert out[k + 1 + n_ext] == 5.0


def test_step_down_extends_backward():
    n = 200
    ranges = np.full(n, 5.0)
    k = 120
    ranges[k + 1:] = 1.0  # step down at beam k -> k+1
    scan = make_scan(ranges)
    out = extend_disparities(scan, CFG)
    dtheta = scan.fov / (n - 1)
    n_ext = math.ceil(CFG.safety_width / (1.0 * dtheta))
    np.testing.assert_array_equal(out[k - n_ext + 1:k + 1], 1.0)
    assert out[k - n_ext] == 5.0


def test_idempotent_when_steps_settle():
    # post-extension jumps fall below the disparity threshold here, so a
    # second application changes nothing
    n = 150
    ranges = np.full(n, 1.25)
    ranges[60:70] = 1.0
    scan = make_scan(ranges)
    once = extend_disparities(scan, CFG)
    twice = extend_disparities(make_scan(once), CFG)
    np.testing.assert_array_equal(once, twice)


def test_symmetric_corridor_straight_and_fast():
    n = 201
    bearings = np.linspace(-2.35, 2.35, n)
    # narrow corridor: sideways beams fall below the gap threshold
    with np.errstate(divide="ignore"):
        ranges = np.minimum(10.0, 0.8 / np.maximum(np.abs(np.sin(bearings)), 1e-9))
    scan = make_scan(ranges)
    speed, delta, info = ftg_action(scan, CFG)
    assert delta == pytest.approx(0.0, abs=1e-9)
    assert speed == CFG.fast_speed
    assert not info["emergency"]


def test_wall_on_right_steers_left():
    n = 201
    ranges = np.full(n, 8.0)
    ranges[: n // 2] = 1.0  # right half blocked (beam 0 is rightmost)
    scan = make_scan(ranges)
    speed, delta, info = ftg_action(scan, CFG)
    assert delta > 0.05


def test_high_steer_uses_slow_speed():
    n = 201
    ranges = np.full(n, 1.0)
    ranges[150:190] = 9.0  # only gap far to the left
    scan = make_scan(ranges)
    speed, delta, info = ftg_action(scan, CFG)
    assert abs(delta) >= CFG.steer_threshold
    assert speed == CFG.slow_speed == 3.0


def test_mirror_equivariance():
    rng = np.random.default_rng(0)
    n = 201
    base = 2.0 + rng.uniform(0, 6, n)
    base[rng.integers(0, n, 10)] = 1.0
    base[37] = 0.9  # unique minimum keeps the bubble mirror-exact
    scan = make_scan(base)
    mirrored = make_scan(base[::-1].copy())
    s1, d1, _ = ftg_action(scan, CFG)
    s2, d2, _ = ftg_action(mirrored, CFG)
    assert s1 == s2
    assert d1 == pytest.approx(-d2, abs=1e-9)


def test_steering_points_into_gap():
    rng = np.random.default_rng(1)
    n = 201
    for _ in range(30):
        ranges = 1.0 + rng.uniform(0, 7, n)
        scan = make_scan(ranges)
        speed, delta, info = ftg_action(scan, CFG)
        if info["emergency"]:
            continue
        lo, hi = info["gap"]
        dtheta = scan.fov / (n - 1)
        b_lo = -scan.fov / 2 + lo * dtheta
        b_hi = -scan.fov / 2 + hi * dtheta
        target = max(min(delta, 0.4), -0.4)
        # the commanded bearing (before clamping) lies inside the gap interval
        mid = -scan.fov / 2 + 0.5 * (lo + hi) * dtheta
        assert b_lo - 1e-9 <= mid <= b_hi + 1e-9
        assert info["gap_min_range"] >= CFG.gap_range_min


def test_emergency_when_no_gap():
    scan = make_scan(np.full(100, 0.4))
    speed, delta, info = ftg_action(scan, CFG)
    assert info["emergency"]
    assert speed == 0.0 and delta == 0.0
