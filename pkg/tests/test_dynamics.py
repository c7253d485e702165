import math

import numpy as np
import pytest

from racebench.dynamics import (
    ControlDerivatives,
    DynamicState,
    VehicleParams,
    derivatives,
    kinematic_derivatives,
    speed_steer_to_derivative_controls,
    step,
)
from racebench.errors import ConfigError, IntegrationDivergedError, SingularSpeedError

P = VehicleParams()


def independent_dynamic_rates(state, u, p):
    """Term-by-term reimplementation of the dynamic single-track equations,
    factored differently from the production code."""
    x, y, delta, v, theta, theta_dot, beta = state
    u1, u2 = u
    gf = p.g * p.l_r - u2 * p.h_cg
    gr = p.g * p.l_f + u2 * p.h_cg
    L = p.l_f + p.l_r

    d_theta_dot = (p.mu * p.m / (p.I_z * L)) * (
        p.l_f * p.C_sf * gf * delta
        + (p.l_r * p.C_sr * gr - p.l_f * p.C_sf * gf) * beta
        - (p.l_f ** 2 * p.C_sf * gf + p.l_r ** 2 * p.C_sr * gr) * (theta_dot / v)
    )
    d_beta = (p.mu / (v * L)) * (
        p.C_sf * gf * delta
        - (p.C_sr * gr + p.C_sf * gf) * beta
        + (p.C_sr * gr * p.l_r - p.C_sf * gf * p.l_f) * (theta_dot / v)
    ) - theta_dot
    return np.array([
        v * math.cos(theta + beta),
        v * math.sin(theta + beta),
        u1,
        u2,
        theta_dot,
        d_theta_dot,
        d_beta,
    ])


def test_straight_line_coast():
    st = DynamicState(x=0, y=0, delta=0, v=2.0, theta=0, theta_dot=0, beta=0)
    d = derivatives(st, ControlDerivatives(0.0, 0.0), P)
    assert d == (2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def test_axis_rotation():
    st = DynamicState(v=3.0, theta=math.pi / 2)
    d = derivatives(st, ControlDerivatives(0.0, 0.0), P)
    assert d[0] == pytest.approx(0.0, abs=1e-15)
    assert d[1] == pytest.approx(3.0)
    assert d[2:] == (0.0, 0.0, 0.0, 0.0, 0.0)


def test_golden_dynamic_derivatives():
    # frozen from an independent by-hand evaluation of the model equations
    st = DynamicState(x=0, y=0, delta=0.1, v=3.0, theta=0.7, theta_dot=0.2, beta=0.05)
    u = ControlDerivatives(0.3, 1.5)
    d = derivatives(st, u, P)
    assert d[0] == pytest.approx(2.1950666066214626, rel=1e-12)
    assert d[1] == pytest.approx(2.0449162800700025, rel=1e-12)
    assert d[5] == pytest.approx(23.316550765183752, rel=1e-12)
    assert d[6] == pytest.approx(-0.22886363636363632, rel=1e-12)


def test_dynamic_matches_independent_on_random_states():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        vals = rng.uniform(-1, 1, size=7)
        vals[3] = rng.uniform(0.1, 8.0)  # dynamic regime
        st = DynamicState(*vals)
        u = ControlDerivatives(rng.uniform(-3.2, 3.2), rng.uniform(-9.5, 9.5))
        got = np.array(derivatives(st, u, P))
        want = independent_dynamic_rates(vals, (u.v_delta, u.a), P)
        np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)


def test_singular_speed_guard():
    with pytest.raises(SingularSpeedError):
        derivatives(DynamicState(v=0.05), ControlDerivatives(0, 0), P)


def test_kinematic_rest_acceleration():
    d = kinematic_derivatives(DynamicState(v=0.0), ControlDerivatives(0.0, 1.0), P)
    assert d[3] == 1.0
    assert all(c == 0.0 for i, c in enumerate(d) if i != 3)


def test_kinematic_straight():
    d = kinematic_derivatives(DynamicState(v=0.05), ControlDerivatives(0, 0), P)
    assert d[4] == 0.0
    assert d[0] == pytest.approx(0.05)


def test_kinematic_yaw_rate():
    d = kinematic_derivatives(DynamicState(v=0.05, delta=0.3), ControlDerivatives(0, 0), P)
    assert d[4] == pytest.approx(0.05 * math.tan(0.3) / 0.33, rel=1e-12)


def test_step_straight_advance():
    st = DynamicState(x=1.0, y=2.0, v=3.0, theta=0.5)
    nxt = step(st, ControlDerivatives(0.0, 0.0), P, 0.01)
    assert nxt.x == pytest.approx(1.0 + 3.0 * 0.01 * math.cos(0.5), rel=1e-12)
    assert nxt.y == pytest.approx(2.0 + 3.0 * 0.01 * math.sin(0.5), rel=1e-12)
    assert nxt.v == pytest.approx(3.0)
    assert nxt.beta == 0.0 and nxt.theta_dot == 0.0


def test_step_saturates_at_v_max():
    st = DynamicState()
    u = ControlDerivatives(0.0, P.a_max)
    for _ in range(2000):
        st = step(st, u, P, 0.01)
    assert st.v == P.v_max


def test_step_determinism():
    st = DynamicState(v=2.0, delta=0.1)
    u = ControlDerivatives(0.5, 1.0)
    a = step(st, u, P, 0.01)
    b = step(st, u, P, 0.01)
    assert a.as_tuple() == b.as_tuple()


def test_kinematic_circle_closure():
    # low speed: kinematic branch; expect a circle of radius L/tan(delta)
    delta = 0.2
    v = 0.05
    radius = P.L / math.tan(delta)
    period = 2 * math.pi * radius / v
    n = int(round(period / 0.01))
    st = DynamicState(v=v, delta=delta)
    for _ in range(n):
        st = step(st, ControlDerivatives(0.0, 0.0), P, 0.01)
    closure = math.hypot(st.x, st.y)
    assert closure <= 0.01 * 2 * math.pi * radius


def test_no_lateral_excitation():
    st = DynamicState(v=4.0)
    for _ in range(500):
        st = step(st, ControlDerivatives(0.0, 0.0), P, 0.01)
        assert st.beta == 0.0
        assert st.theta_dot == 0.0


def test_branch_continuity_at_cutoff():
    st = DynamicState(v=0.1, theta=0.9)
    u = ControlDerivatives(0.0, 0.0)
    dyn = derivatives(st, u, P)
    kin = kinematic_derivatives(st, u, P)
    assert dyn[0] == pytest.approx(kin[0], rel=1e-12)
    assert dyn[1] == pytest.approx(kin[1], rel=1e-12)


def test_step_rejects_bad_dt():
    with pytest.raises(ConfigError):
        step(DynamicState(), ControlDerivatives(0, 0), P, 0.0)


def test_step_diverged_detection():
    st = DynamicState(v=2.0, theta=math.inf)
    with pytest.raises(IntegrationDivergedError):
        step(st, ControlDerivatives(0, 0), P, 0.01)


def test_control_mapping_at_targets():
    st = DynamicState(v=2.0, delta=0.1)
    u = speed_steer_to_derivative_controls(2.0, 0.1, st, P)
    assert u.v_delta == 0.0 and u.a == 0.0


def test_control_mapping_saturation():
    st = DynamicState(v=0.0, delta=0.0)
    u = speed_steer_to_derivative_controls(100.0, 0.0, st, P)
    assert u.a == P.a_max


def test_control_mapping_proportional():
    st = DynamicState(v=2.0, delta=0.0)
    u = speed_steer_to_derivative_controls(2.0, 0.05, st, P)
    expect = min(P.k_delta * 0.05, P.v_delta_max)
    assert u.v_delta == pytest.approx(expect, rel=1e-12)


def test_params_validation():
    with pytest.raises(ConfigError):
        VehicleParams(mu=1.5)
    with pytest.raises(ConfigError):
        VehicleParams(m=-1.0)
    assert VehicleParams(l_f=0.15, l_r=0.18).L == pytest.approx(0.33)


def test_params_from_file(tmp_path):
    path = tmp_path / "vehicle.cfg"
    path.write_text("# generic 1:10 car\nm=3.2\nmu=0.8\nv_max=6.0\n")
    p = VehicleParams.from_file(path)
    assert p.m == 3.2 and p.mu == 0.8 and p.v_max == 6.0
    assert p.l_f == VehicleParams().l_f  # defaults kept


def test_params_from_file_rejects_unknown(tmp_path):
    path = tmp_path / "vehicle.cfg"
    path.write_text("tyre_model=pacejka\n")
    with pytest.raises(ConfigError, match="unknown parameter"):
        VehicleParams.from_file(path)
