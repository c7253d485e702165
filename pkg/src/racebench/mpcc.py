"""Model predictive contouring control on the kinematic bicycle.

State [x, y, theta, s] with control [delta, v, s_dot]; the solver maximises
centerline progress subject to linearised contouring bounds, the friction
constraint, and actuator boxes. Each control step runs a few iterations of:
linearise about the reference trajectory, condense the LTV dynamics onto the
control sequence, solve the resulting dense QP, re-roll the nonlinear model.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, QpInfeasibleError
from .qp import solve_qp
from .util import wrap_to_pi

FRICTION_SLACK = 1e-6
RIDGE = 1e-8


@dataclass(frozen=True)
class MpccWeights:
    q_c: float = 0.5      # contouring error weight
    q_l: float = 10.0     # lag error weight
    q_s: float = 1.0      # progress reward weight
    r_delta: float = 0.5  # steering regularisation

    def __post_init__(self):
        if min(self.q_c, self.q_l, self.q_s, self.r_delta) < 0:
            raise ConfigError("MPCC weights must be >= 0")
        if self.q_l < self.q_c:
            raise ConfigError("lag must be weighted at least as hard as contour")


@dataclass(frozen=True)
class MpccParams:
    horizon: int = 15
    dt: float = 0.1
    margin: float = 0.35          # subtracted from track half-widths
    bound_guard: float = 0.12     # linearisation guard inside the bounds
    sqp_iterations: int = 2
    weights: MpccWeights = field(default_factory=MpccWeights)
    fallback_speed_factor: float = 0.4
    # trust region around the linearisation reference per SQP pass
    trust_delta: float = 0.2
    trust_v: float = 1.5
    # quadratic penalty on contouring-bound slack (engages only when the
    # current state already violates the tube, e.g. during recoveries)
    slack_weight: float = 2e4

    def __post_init__(self):
        if self.horizon < 1 or self.dt <= 0:
            raise ConfigError("bad MPCC horizon")


def contouring_lag_errors(x, y, s, param):
    """Exact contouring and lag errors of a state against the path."""
    xy = param.xy_at(s)
    phi = param.phi_at(s)
    dx = x - float(xy[0])
    dy = y - float(xy[1])
    eps_c = math.sin(phi) * dx - math.cos(phi) * dy
    eps_l = -math.cos(phi) * dx - math.sin(phi) * dy
    return eps_c, eps_l


def friction_ok(v, delta, p):
    """True while the lateral force stays below mu times the weight."""
    return v * v * math.tan(abs(delta)) / p.L < p.mu * p.g


def _rollout(x0, controls, p, dt):
    """Nonlinear kinematic-bicycle rollout; returns states 0..N."""
    states = [np.asarray(x0, dtype=np.float64)]
    for (delta, v, s_dot) in controls:
        x, y, th, s = states[-1]
        states.append(np.array([
            x + v * math.cos(th) * dt,
            y + v * math.sin(th) * dt,
            th + v * math.tan(delta) / p.L * dt,
            s + s_dot * dt,
        ]))
    return np.stack(states)


def _error_linearisation(xbar, param):
    """Linearise (eps_c, eps_l) of one state about (x, y, s)."""
    x, y, _, s = xbar
    xy = param.xy_at(s)
    phi = float(param.phi_at(s))
    dphi = float(param.dphi_ds_at(s))
    tx, ty = param.tangent_at(s)
    sin_p, cos_p = math.sin(phi), math.cos(phi)
    dx = x - float(xy[0])
    dy = y - float(xy[1])

    ec0 = sin_p * dx - cos_p * dy
    el0 = -cos_p * dx - sin_p * dy
    # gradients w.r.t. (x, y, s)
    gc = np.array([
        sin_p,
        -cos_p,
        dphi * (cos_p * dx + sin_p * dy) - sin_p * tx + cos_p * ty,
    ])
    gl = np.array([
        -cos_p,
        -sin_p,
        dphi * (sin_p * dx - cos_p * dy) + cos_p * tx + sin_p * ty,
    ])
    return ec0, el0, gc, gl


@dataclass
class MpccSolution:
    controls: np.ndarray   # (N, 3): delta, v, s_dot
    states: np.ndarray     # (N+1, 4) nonlinear rollout
    objective: float
    fallback: bool = False
    sqp_iters: int = 0


class MpccSolver:
    """One receding-horizon solver instance (owns its warm start)."""

    def __init__(self, param, vehicle, params=None):
        self.param = param
        self.vehicle = vehicle
        self.params = params or MpccParams()
        self._warm = None  # previous control sequence
        self._v_meas = 0.0

    def reset(self):
        self._warm = None
        self._v_meas = 0.0

    def _initial_controls(self, speed):
        n = self.params.horizon
        v0 = max(min(speed, self.vehicle.v_max), 0.5)
        u = np.zeros((n, 3))
        u[:, 1] = v0
        u[:, 2] = v0
        return u

    def _condition_reference(self, u, v_meas):
        """Clamp a (possibly stale) reference into a slew-feasible profile
        anchored at the measured speed, so the trust and rate boxes always
        intersect."""
        p = self.vehicle
        dt = self.params.dt
        out = u.copy()
        out[:, 0] = np.clip(out[:, 0], -p.delta_max, p.delta_max)
        out[:, 1] = np.clip(out[:, 1], 0.0, p.v_max)
        out[:, 2] = np.clip(out[:, 2], 0.0, p.v_max)
        a_lim = min(p.a_max, p.mu * p.g)
        out[0, 1] = min(max(out[0, 1], v_meas - a_lim * dt), v_meas + a_lim * dt)
        for k in range(1, len(out)):
            out[k, 0] = min(max(out[k, 0], out[k - 1, 0] - p.v_delta_max * dt),
                            out[k - 1, 0] + p.v_delta_max * dt)
            out[k, 1] = min(max(out[k, 1], out[k - 1, 1] - a_lim * dt),
                            out[k - 1, 1] + a_lim * dt)
        return out

    def solve(self, pose, speed, s0=None):
        """Solve from a measured pose; returns an MpccSolution."""
        p = self.vehicle
        mp = self.params
        n = mp.horizon
        dt = mp.dt
        if s0 is None:
            s0, _ = self.param.project(pose[0], pose[1])
        x0 = np.array([pose[0], pose[1], pose[2], s0])
        self._v_meas = float(speed)

        if self._warm is not None:
            u = np.vstack([self._warm[1:], self._warm[-1:]])
        else:
            u = self._initial_controls(speed)
        u = self._condition_reference(u, speed)

        last = None
        for it in range(mp.sqp_iterations):
            try:
                u_new, obj = self._solve_linearised(x0, u)
            except QpInfeasibleError:
                if last is not None:
                    break
                self._warm = None
                return MpccSolution(
                    controls=np.zeros((n, 3)),
                    states=_rollout(x0, np.zeros((n, 3)), p, dt),
                    objective=float("nan"),
                    fallback=True,
                    sqp_iters=it,
                )
            step = np.abs(u_new - u).max()
            u = u_new
            last = obj
            if step < 1e-6:
                break

        u = self._project_feasible(u)
        states = _rollout(x0, u, p, dt)
        self._warm = u.copy()
        return MpccSolution(controls=u, states=states, objective=float(last),
                            sqp_iters=it + 1)

    def _project_feasible(self, u):
        """Clamp controls into boxes and onto the friction boundary."""
        p = self.vehicle
        out = u.copy()
        out[:, 0] = np.clip(out[:, 0], -p.delta_max, p.delta_max)
        out[:, 1] = np.clip(out[:, 1], 0.0, p.v_max)
        out[:, 2] = np.clip(out[:, 2], 0.0, p.v_max)
        for k in range(len(out)):
            delta, v = out[k, 0], out[k, 1]
            tan_d = math.tan(abs(delta))
            if tan_d > 1e-12:
                v_lim = math.sqrt(max(p.mu * p.g * p.L / tan_d - FRICTION_SLACK, 0.0))
                if v > v_lim:
                    out[k, 1] = v_lim
        return out

    def _solve_linearised(self, x0, u_ref):
        p = self.vehicle
        mp = self.params
        w = mp.weights
        n = mp.horizon
        dt = mp.dt
        nu = 3 * n
        ntot = nu + n  # controls plus one contouring slack per stage

        states = _rollout(x0, u_ref, p, dt)

        # condense LTV dynamics: states(1..N) = S @ U + c
        S = np.zeros((4 * n, nu))
        c = np.zeros(4 * n)
        prev_rows = None
        prev_c = x0
        for k in range(n):
            delta_b, v_b, _ = u_ref[k]
            th_b = states[k][2]
            cos_t, sin_t = math.cos(th_b), math.sin(th_b)
            tan_d = math.tan(delta_b)
            sec2 = 1.0 / (math.cos(delta_b) ** 2)

            A = np.eye(4)
            A[0, 2] = -dt * v_b * sin_t
            A[1, 2] = dt * v_b * cos_t
            B = np.zeros((4, 3))
            B[0, 1] = dt * cos_t
            B[1, 1] = dt * sin_t
            B[2, 0] = dt * v_b * sec2 / p.L
            B[2, 1] = dt * tan_d / p.L
            B[3, 2] = dt
            # affine remainder keeps the linear model exact at the reference
            fk = np.array([
                states[k][0] + v_b * cos_t * dt,
                states[k][1] + v_b * sin_t * dt,
                states[k][2] + v_b * tan_d / p.L * dt,
                states[k][3] + u_ref[k][2] * dt,
            ])
            ck = fk - A @ prev_c - B @ u_ref[k]

            rows = slice(4 * k, 4 * k + 4)
            if prev_rows is None:
                c[rows] = A @ x0 + ck
            else:
                S[rows] = A @ S[prev_rows]
                c[rows] = A @ c[prev_rows] + ck
            S[rows, 3 * k:3 * k + 3] += B
            prev_rows = rows
            prev_c = states[k + 1]  # linearisation point of the next stage

        # objective in [U, slack]
        H = np.zeros((ntot, ntot))
        f = np.zeros(ntot)
        const = 0.0
        eps_rows = []  # (k, row_u, offset) of the contouring error, reused for bounds
        for k in range(n):
            xbar = states[k + 1]
            ec0, el0, gc, gl = _error_linearisation(xbar, self.param)
            rows = slice(4 * k, 4 * k + 4)
            # map (x, y, s) rows of the stacked state onto U
            sel = np.array([0, 1, 3])
            Gk = S[rows][sel]          # 3 x nu
            ck3 = c[rows][sel]
            xb3 = xbar[sel]
            for is_c, (g0, e0, wgt) in enumerate(((gl, el0, w.q_l), (gc, ec0, w.q_c))):
                # eps(U) = e0 + g0 @ (state3(U) - xb3)
                row = g0 @ Gk
                off = float(e0 + g0 @ (ck3 - xb3))
                H[:nu, :nu] += 2.0 * wgt * np.outer(row, row)
                f[:nu] += 2.0 * wgt * off * row
                const += wgt * off * off
                if is_c:
                    eps_rows.append((k, row, off))
            # steering regularisation and progress reward
            H[3 * k, 3 * k] += 2.0 * w.r_delta
            f[3 * k + 2] += -w.q_s * dt
            H[nu + k, nu + k] += 2.0 * mp.slack_weight

        # relative ridge keeps the slack-dominated Hessian invertible in float64
        H += (RIDGE + 1e-7 * float(np.diag(H).max())) * np.eye(ntot)

        # inequality rows
        A_rows = []
        b_rows = []

        def add_row(row_u, rhs, slack_k=None):
            row = np.zeros(ntot)
            row[:nu] = row_u
            if slack_k is not None:
                row[nu + slack_k] = -1.0
            A_rows.append(row)
            b_rows.append(rhs)

        for k in range(n):
            base = 3 * k
            delta_b, v_b, sd_b = u_ref[k]
            # actuator boxes intersected with the trust region
            d_lo = max(-p.delta_max, delta_b - mp.trust_delta)
            d_hi = min(p.delta_max, delta_b + mp.trust_delta)
            v_lo = max(0.0, v_b - mp.trust_v)
            v_hi = min(p.v_max, v_b + mp.trust_v)
            s_lo = max(0.0, sd_b - mp.trust_v)
            s_hi = min(p.v_max, sd_b + mp.trust_v)
            for j, (lim_lo, lim_hi) in ((0, (d_lo, d_hi)), (1, (v_lo, v_hi)),
                                        (2, (s_lo, s_hi))):
                row = np.zeros(nu)
                row[base + j] = 1.0
                add_row(row, lim_hi)
                add_row(-row, -lim_lo)
            # friction linearised about (v_b, delta_b)
            tan_ad = math.tan(abs(delta_b))
            g0 = v_b * v_b * tan_ad / p.L - p.mu * p.g
            dv = 2.0 * v_b * tan_ad / p.L
            dd = v_b * v_b * math.copysign(1.0, delta_b) / (p.L * math.cos(delta_b) ** 2)
            row = np.zeros(nu)
            row[base + 0] = dd
            row[base + 1] = dv
            add_row(row, dv * v_b + dd * delta_b - g0 - FRICTION_SLACK)
            # slew feasibility between consecutive horizon stages; the
            # longitudinal budget is traction-limited like the lateral one
            a_lim = min(p.a_max, p.mu * p.g)
            if k > 0:
                for j, rate in ((0, p.v_delta_max), (1, a_lim)):
                    row = np.zeros(nu)
                    row[base + j] = 1.0
                    row[base - 3 + j] = -1.0
                    add_row(row, rate * dt)
                    add_row(-row, rate * dt)
            else:
                row = np.zeros(nu)
                row[1] = 1.0
                add_row(row, self._v_meas + a_lim * dt)
                add_row(-row, -(self._v_meas - a_lim * dt))

        # softened contouring bounds on states 1..N; slack engages only when
        # the reference already sits outside the tube
        guard = mp.margin + mp.bound_guard
        for k, row, off in eps_rows:
            wl, wr = self.param.widths_at(states[k + 1][3])
            # positive eps_c lies right of the path
            add_row(row, float(wr) - guard - off, slack_k=k)
            add_row(-row, float(wl) - guard + off, slack_k=k)
        for k in range(n):
            srow = np.zeros(ntot)
            srow[nu + k] = -1.0
            A_rows.append(srow)
            b_rows.append(0.0)

        A_mat = np.array(A_rows)
        b_vec = np.array(b_rows)
        try:
            x_sol, _, _ = solve_qp(H, f, A_mat, b_vec)
        except QpInfeasibleError:
            # borderline conditioning: one retry with a firmer ridge
            bump = 1e-5 * float(np.diag(H).max())
            x_sol, _, _ = solve_qp(H + bump * np.eye(ntot), f, A_mat, b_vec)
        obj = 0.5 * float(x_sol @ H @ x_sol) + float(f @ x_sol) + const
        return x_sol[:nu].reshape(n, 3), obj


class MpccPlanner:
    """Receding-horizon planner for the episode engine.

    A stopped vehicle whose first planned action is also near-zero speed is a
    receding-horizon deadlock (the plan rotates later but never moves now);
    after a few such steps the planner creeps toward the path instead.
    """

    name = "mpcc"
    CREEP_SPEED = 1.5
    CREEP_AFTER = 3

    def __init__(self, param, vehicle, params=None, horizon_dump=None):
        self.solver = MpccSolver(param, vehicle, params)
        self.last_solution = None
        self.fallback_count = 0
        self._stalled = 0
        self._dump_path = horizon_dump
        self._dump_count = 0
        if horizon_dump:
            with open(horizon_dump, "w") as fh:
                fh.write("solve,k,x_m,y_m,theta_rad,s_m,delta_rad,v_mps,"
                         "sdot_mps,fallback\n")

    def reset(self):
        self.solver.reset()
        self.last_solution = None
        self.fallback_count = 0
        self._stalled = 0

    def _dump(self, sol):
        with open(self._dump_path, "a") as fh:
            for k in range(len(sol.controls)):
                x, y, th, s = sol.states[k + 1]
                d, v, sd = sol.controls[k]
                fh.write(f"{self._dump_count},{k},{x:.9g},{y:.9g},{th:.9g},"
                         f"{s:.9g},{d:.9g},{v:.9g},{sd:.9g},{int(sol.fallback)}\n")
        self._dump_count += 1

    def _creep_action(self, obs):
        s0, _ = self.solver.param.project(obs.pose[0], obs.pose[1])
        target = self.solver.param.xy_at(s0 + 1.5)
        bearing = wrap_to_pi(
            math.atan2(target[1] - obs.pose[1], target[0] - obs.pose[0]) - obs.pose[2]
        )
        delta = max(-self.vehicle_delta_max, min(self.vehicle_delta_max, bearing))
        return self.CREEP_SPEED, delta

    @property
    def vehicle_delta_max(self):
        return self.solver.vehicle.delta_max

    def plan(self, obs):
        sol = self.solver.solve(obs.pose, obs.speed)
        self.last_solution = sol
        if self._dump_path:
            self._dump(sol)
        if sol.fallback:
            self.fallback_count += 1
            self.solver.reset()  # stale warm starts cascade otherwise
            return self.solver.params.fallback_speed_factor * obs.speed, 0.0
        delta, v, _ = sol.controls[0]
        if obs.speed < 0.3 and v < 0.3:
            self._stalled += 1
            if self._stalled >= self.CREEP_AFTER:
                self.solver.reset()
                return self._creep_action(obs)
        else:
            self._stalled = 0
        return float(v), float(delta)
