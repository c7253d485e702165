import math

import numpy as np
import pytest

from racebench.dynamics import VehicleParams
from racebench.errors import TrackFormatError
from racebench.raceline import (
    Raceline,
    build_raceline,
    centerline_raceline,
    curvature_objective,
    load_raceline,
    minimum_curvature,
    save_raceline,
    speed_profile,
    _path_geometry,
)
from racebench.track import CenterlineTrack
from racebench.tracks import make_oval, make_stadium, make_wiggle

P = VehicleParams()


def circle_track(radius, n=200, width=1.0, clockwise=True):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    if clockwise:
        t = -t
    pts = np.stack([radius * np.cos(t), radius * np.sin(t)], axis=1)
    w = np.full(n, width)
    return CenterlineTrack(points=pts, w_left=w, w_right=w)


def corridor_track():
    """Rounded rectangle with long straights: alpha = 0 is optimal there."""
    return make_stadium(radius=6.0, straight=14.0, width=1.0)


# -- minimum curvature ------------------------------------------------------

def test_straight_sections_untouched():
    trk = corridor_track()
    pts, alpha, report = minimum_curvature(trk, P, margin=0.1)
    # mid-straight points have nothing to gain
    mid = np.argmin(np.abs(trk.s - 7.0))
    assert abs(alpha[mid]) < 0.12
    assert report.objective_after <= report.objective_before


def test_circle_goes_to_outer_bound():
    # clockwise circle: left normal points outward
    trk = circle_track(10.0)
    pts, alpha, report = minimum_curvature(trk, P, margin=0.0)
    a_max = 1.0 - P.half_width
    assert np.abs(alpha - a_max).max() <= 1e-3
    _, _, _, kappa = _path_geometry(pts)
    assert abs(np.abs(kappa).mean() - 1.0 / (10.0 + a_max)) <= 1e-3


def test_corner_beats_centerline_and_brute_force():
    # 12-point rounded-square toy with 4-fold symmetry: the offsets repeat
    # every 3 indices, so a coarse grid can be enumerated exhaustively
    import itertools

    t = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    pts = np.stack([4 * np.sign(np.cos(t)) * np.abs(np.cos(t)) ** 0.5,
                    4 * np.sign(np.sin(t)) * np.abs(np.sin(t)) ** 0.5], axis=1)
    w = np.full(12, 1.0)
    trk = CenterlineTrack(points=pts, w_left=w, w_right=w)
    pts_opt, alpha, report = minimum_curvature(trk, P, margin=0.1)

    from racebench.raceline import _left_normals
    normals = _left_normals(trk.points)
    bound = 1.0 - P.half_width - 0.1
    grid = np.linspace(-bound, bound, 7)
    best = math.inf
    for pat in itertools.product(range(len(grid)), repeat=3):
        a = np.array([grid[pat[i % 3]] for i in range(12)])
        best = min(best, curvature_objective(trk.points + a[:, None] * normals))

    assert report.objective_after <= best + 1e-9
    assert report.objective_after < report.objective_before
    _, _, _, k_opt = _path_geometry(pts_opt)
    _, _, _, k_center = _path_geometry(trk.points)
    assert np.abs(k_opt).max() < np.abs(k_center).max()


def test_infeasible_bounds_rejected():
    trk = circle_track(10.0, width=0.2)
    with pytest.raises(TrackFormatError):
        minimum_curvature(trk, P, margin=0.2)


def test_feasibility_of_offsets():
    trk = make_wiggle()
    pts, alpha, _ = minimum_curvature(trk, P, margin=0.1)
    hi = trk.w_left - P.half_width - 0.1
    lo = -(trk.w_right - P.half_width - 0.1)
    assert (alpha <= hi + 1e-9).all() and (alpha >= lo - 1e-9).all()


def test_objective_never_worse_on_shipped_tracks():
    for maker in (make_oval, make_stadium, make_wiggle):
        trk = maker()
        _, _, report = minimum_curvature(trk, P, margin=0.1)
        assert report.objective_after <= report.objective_before + 1e-12


def test_index_rotation_equivariance():
    trk = circle_track(8.0, n=100)
    shift = 17
    rolled = CenterlineTrack(points=np.roll(trk.points, -shift, axis=0),
                             w_left=trk.w_left, w_right=trk.w_right)
    pts_a, _, _ = minimum_curvature(trk, P, margin=0.0)
    pts_b, _, _ = minimum_curvature(rolled, P, margin=0.0)
    np.testing.assert_allclose(np.roll(pts_a, -shift, axis=0), pts_b, atol=1e-6)


# -- speed profile ------------------------------------------------------

def test_straight_profile_hits_v_max():
    n = 400
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    pts = np.stack([20 * np.cos(t), 20 * np.sin(t)], axis=1)  # kappa = 0.05
    v, kappa, seg_len, flagged = speed_profile(pts, P, mu=1.0, v_max=8.0)
    # lateral limit at kappa=0.05 is ~13.8, so v_max binds everywhere
    assert np.allclose(v, 8.0)
    assert not flagged


def test_constant_curvature_fixed_point():
    n = 300
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    pts = np.stack([2 * np.cos(t), 2 * np.sin(t)], axis=1)  # kappa = 0.5
    v, kappa, _, _ = speed_profile(pts, P, mu=1.0, v_max=50.0)
    k = float(np.abs(kappa).mean())
    assert np.abs(v - 1.0 / k).max() <= 1e-3


def test_acceleration_bound_everywhere():
    for maker in (make_oval, make_wiggle):
        trk = maker()
        pts, _, _ = minimum_curvature(trk, P, margin=0.1)
        mu = 0.9
        v, kappa, seg_len, _ = speed_profile(pts, P, mu=mu, v_max=8.0)
        dv2 = np.abs(np.roll(v, -1) ** 2 - v ** 2)
        assert (dv2 / (2 * seg_len) <= mu * P.a_max + 1e-9).all()


def test_profile_is_fixed_point():
    trk = make_oval()
    pts, _, _ = minimum_curvature(trk, P, margin=0.1)
    v1, kappa, seg_len, _ = speed_profile(pts, P, mu=0.9, v_max=8.0)
    v2, _, _, _ = speed_profile(pts, P, mu=0.9, v_max=8.0)
    np.testing.assert_array_equal(v1, v2)


# -- raceline io --------------------------------------------------------

def test_save_load_roundtrip(tmp_path):
    line, _ = build_raceline(make_oval(), P, margin=0.4, mu=0.6)
    path = tmp_path / "line.csv"
    save_raceline(line, path)
    back = load_raceline(path)
    for name in ("s", "x", "y", "psi", "kappa", "v"):
        np.testing.assert_allclose(getattr(back, name), getattr(line, name),
                                   atol=1e-9, rtol=1e-9)


def test_load_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("s_m,x_m,y_m,psi_rad,kappa_radpm\n0,0,0,0,0\n")
    with pytest.raises(TrackFormatError, match="header"):
        load_raceline(path)


def test_load_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("s_m,x_m,y_m,psi_rad,kappa_radpm,vx_mps\n")
    with pytest.raises(TrackFormatError, match="no waypoints"):
        load_raceline(path)


def test_centerline_raceline_speeds():
    line = centerline_raceline(make_oval(), v=2.0)
    assert (line.v == 2.0).all()
    assert line.length == pytest.approx(make_oval().length, rel=1e-9)
