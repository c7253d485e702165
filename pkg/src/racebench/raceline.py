"""Offline global planning: minimum-curvature path and minimum-time speed profile.

The path optimiser moves each centerline point along its left normal by a
bounded offset alpha and minimises the sum of squared heading changes per
arc length. The curvature is linearised in alpha and the resulting
box-constrained quadratic program is solved with projected gradients and
Barzilai-Borwein steps, re-linearising until the offsets settle.

The speed profile seeds each waypoint with the lateral-limit speed and then
sweeps the acceleration recursion v_{i+1} = sqrt(v_i^2 +- 2 l_i mu a_max
(1 - v_i kappa_i)) forward and backward around the loop, keeping the
pointwise minimum until convergence.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import TrackFormatError
from .util import wrap_to_pi

# outer re-linearisation loop
MAX_OUTER_ITERS = 10
OUTER_TOL = 1e-3          # m, max |alpha change|
# inner projected-gradient loop
MAX_INNER_ITERS = 4000
INNER_TOL = 1e-6          # projected-gradient norm
# speed-profile sweeps
SPEED_TOL = 1e-4          # m/s
MAX_SPEED_SWEEPS = 500
V_FLOOR = 0.05            # m/s, keeps speeds strictly positive


@dataclass(frozen=True)
class Raceline:
    """Optimised closed waypoint sequence with speeds."""

    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    psi: np.ndarray
    kappa: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        n = len(self.s)
        if n < 4:
            raise TrackFormatError("raceline needs >= 4 waypoints")
        for name in ("x", "y", "psi", "kappa", "v"):
            if len(getattr(self, name)) != n:
                raise TrackFormatError(f"raceline column {name} has wrong length")
        if not (np.diff(self.s) > 0).all():
            raise TrackFormatError("raceline s must be strictly increasing")

    @property
    def n_points(self):
        return len(self.s)

    @property
    def length(self):
        last = math.hypot(self.x[0] - self.x[-1], self.y[0] - self.y[-1])
        return float(self.s[-1] + last)

    @property
    def points(self):
        return np.stack([self.x, self.y], axis=1)


@dataclass
class OptimizationReport:
    objective_before: float
    objective_after: float
    outer_iterations: int
    converged: bool
    flagged_speed_indices: tuple = ()


def _path_geometry(pts):
    """Segment headings/lengths and vertex curvature of a closed polygon."""
    nxt = np.roll(pts, -1, axis=0)
    seg = nxt - pts
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    heading = np.arctan2(seg[:, 1], seg[:, 0])
    dpsi = wrap_to_pi(heading - np.roll(heading, 1))
    ds = 0.5 * (seg_len + np.roll(seg_len, 1))
    kappa = dpsi / ds
    return seg, seg_len, heading, kappa


def curvature_objective(pts):
    """Sum of squared heading change per arc length; the optimiser's objective."""
    _, _, _, kappa = _path_geometry(pts)
    return float((kappa ** 2).sum())


def _left_normals(pts):
    """Unit normals pointing left of travel at each vertex (central tangent)."""
    tang = np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0)
    tang /= np.hypot(tang[:, 0], tang[:, 1])[:, None]
    return np.stack([-tang[:, 1], tang[:, 0]], axis=1)


def _solve_box_qp(kappa0, A, lo, hi, x0):
    """min ||kappa0 + A x||^2 s.t. lo <= x <= hi.

    Spectral projected gradient with a monotone Armijo backtrack: Barzilai-
    Borwein steps for speed, a line search so the returned point never has a
    worse objective than x0 (the outer loop relies on that descent).
    """
    x = np.clip(x0, lo, hi)

    def value(xv):
        r = kappa0 + A @ xv
        return float(r @ r)

    def grad(xv):
        return 2.0 * (A.T @ (kappa0 + A @ xv))

    fx = value(x)
    g = grad(x)
    t = 1.0 / max(np.abs(g).max(), 1.0)
    for _ in range(MAX_INNER_ITERS):
        d = np.clip(x - t * g, lo, hi) - x
        dn = np.linalg.norm(d, np.inf)
        if dn < INNER_TOL:
            break
        slope = float(g @ d)
        lam = 1.0
        while lam > 1e-12:
            f_new = value(x + lam * d)
            if f_new <= fx + 1e-4 * lam * slope:
                break
            lam *= 0.5
        x_new = x + lam * d
        g_new = grad(x_new)
        dx = x_new - x
        dg = g_new - g
        dgg = float(dx @ dg)
        if dgg > 1e-16:
            t = min(max(float(dx @ dx) / dgg, 1e-10), 1e8)
        x, g, fx = x_new, g_new, f_new
    return x


def minimum_curvature(track, params, margin=0.1):
    """Optimise lateral offsets from the centerline to minimise curvature.

    Returns (points, alpha, report). Offsets are positive along the left
    normal; bounds keep the vehicle body plus the margin inside the track.
    """
    pts_c = track.points
    n = pts_c.shape[0]
    normals = _left_normals(pts_c)
    hi = track.w_left - params.half_width - margin
    lo = -(track.w_right - params.half_width - margin)
    if (hi < lo).any() or (hi < 0).any() or (lo > 0).any():
        raise TrackFormatError("track too narrow for the vehicle plus margin")

    alpha = np.zeros(n)
    obj0 = curvature_objective(pts_c)
    best_alpha = alpha
    best_obj = obj0
    converged = False
    outer = 0
    for outer in range(1, MAX_OUTER_ITERS + 1):
        pts = pts_c + alpha[:, None] * normals
        seg, seg_len, heading, kappa = _path_geometry(pts)

        # d heading_k / d alpha: heading of segment k reacts to its endpoints
        # k (start) and k+1 (end) through the rotated segment direction
        g = np.stack([-seg[:, 1], seg[:, 0]], axis=1) / (seg_len ** 2)[:, None]
        d_head_d_end = (g * np.roll(normals, -1, axis=0)).sum(axis=1)   # w.r.t. alpha_{k+1}
        d_head_d_start = -(g * normals).sum(axis=1)                     # w.r.t. alpha_k
        # segment lengths react through the unit tangent
        tang = seg / seg_len[:, None]
        d_len_d_end = (tang * np.roll(normals, -1, axis=0)).sum(axis=1)
        d_len_d_start = -(tang * normals).sum(axis=1)

        # kappa_i = wrap(heading_i - heading_{i-1}) / ds_i; the quotient rule
        # keeps the arc-length sensitivity (it alone drives constant-radius arcs)
        ds = 0.5 * (seg_len + np.roll(seg_len, 1))
        rows = np.arange(n)
        A = np.zeros((n, n))
        A[rows, (rows + 1) % n] += d_head_d_end / ds
        A[rows, rows] += (d_head_d_start - np.roll(d_head_d_end, 1)) / ds
        A[rows, (rows - 1) % n] += -np.roll(d_head_d_start, 1) / ds
        scale = kappa / ds
        A[rows, (rows + 1) % n] -= scale * (0.5 * d_len_d_end)
        A[rows, rows] -= scale * 0.5 * (d_len_d_start + np.roll(d_len_d_end, 1))
        A[rows, (rows - 1) % n] -= scale * (0.5 * np.roll(d_len_d_start, 1))

        d_alpha = _solve_box_qp(kappa, A, lo - alpha, hi - alpha, np.zeros(n))
        if np.linalg.norm(d_alpha, np.inf) < OUTER_TOL:
            converged = True
            break

        # backtrack on the true objective: the linearisation is only locally
        # valid, and full steps can oscillate on tightly sampled tracks
        obj_cur = curvature_objective(pts_c + alpha[:, None] * normals)
        tau = 1.0
        accepted = False
        for _ in range(6):
            cand = alpha + tau * d_alpha
            if curvature_objective(pts_c + cand[:, None] * normals) < obj_cur:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            break
        alpha = cand
        if curvature_objective(pts_c + alpha[:, None] * normals) < best_obj:
            best_obj = curvature_objective(pts_c + alpha[:, None] * normals)
            best_alpha = alpha.copy()
        if tau * np.linalg.norm(d_alpha, np.inf) < OUTER_TOL:
            converged = True
            break

    if curvature_objective(pts_c + alpha[:, None] * normals) > best_obj:
        alpha = best_alpha
    pts = pts_c + alpha[:, None] * normals
    report = OptimizationReport(
        objective_before=obj0,
        objective_after=curvature_objective(pts),
        outer_iterations=outer,
        converged=converged,
    )
    return pts, alpha, report


def speed_profile(pts, params, mu=None, v_max=None):
    """Speed per waypoint from the lateral limit plus the forward/backward
    acceleration recursion; returns (v, kappa, seg_len, flagged_indices)."""
    mu = params.mu if mu is None else mu
    v_max = params.v_max if v_max is None else v_max
    _, seg_len, _, kappa = _path_geometry(pts)
    n = len(seg_len)
    ak = np.abs(kappa)

    with np.errstate(divide="ignore"):
        v_lat = np.sqrt(mu * params.a_max / np.maximum(ak, 1e-12))
    v = np.minimum(v_lat, v_max)
    flagged = set()

    for _ in range(MAX_SPEED_SWEEPS):
        v_prev = v.copy()
        # forward: accelerating out of slow sections
        for i in range(n):
            j = (i + 1) % n
            rad = v[i] ** 2 + 2.0 * seg_len[i] * mu * params.a_max * (1.0 - v[i] * ak[i])
            if rad < 0.0:
                cand = v[i]
                flagged.add(i)
            else:
                cand = math.sqrt(rad)
            if cand < v[j]:
                v[j] = cand
        # backward: braking into slow sections
        for i in range(n - 1, -1, -1):
            j = (i + 1) % n
            rad = v[j] ** 2 + 2.0 * seg_len[i] * mu * params.a_max * (1.0 - v[j] * ak[j])
            if rad < 0.0:
                cand = v[j]
                flagged.add(j)
            else:
                cand = math.sqrt(rad)
            if cand < v[i]:
                v[i] = cand
        if np.abs(v - v_prev).max() < SPEED_TOL:
            break

    v = np.clip(v, V_FLOOR, v_max)
    return v, kappa, seg_len, tuple(sorted(flagged))


def build_raceline(track, params, margin=0.1, mu=None, v_max=None):
    """Full pipeline: minimum-curvature path + speed profile -> Raceline."""
    pts, alpha, report = minimum_curvature(track, params, margin=margin)
    v, kappa, seg_len, flagged = speed_profile(pts, params, mu=mu, v_max=v_max)
    report.flagged_speed_indices = flagged
    seg = np.roll(pts, -1, axis=0) - pts
    psi = np.arctan2(seg[:, 1], seg[:, 0])
    s = np.concatenate([[0.0], np.cumsum(seg_len[:-1])])
    line = Raceline(s=s, x=pts[:, 0], y=pts[:, 1], psi=psi, kappa=kappa, v=v)
    return line, report


def centerline_raceline(track, v=2.0):
    """Constant-speed raceline straight down the centerline (reference laps)."""
    pts = track.points
    seg = np.roll(pts, -1, axis=0) - pts
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    psi = np.arctan2(seg[:, 1], seg[:, 0])
    _, _, _, kappa = _path_geometry(pts)
    s = np.concatenate([[0.0], np.cumsum(seg_len[:-1])])
    return Raceline(s=s, x=pts[:, 0], y=pts[:, 1], psi=psi, kappa=kappa,
                    v=np.full(len(s), float(v)))


RACELINE_HEADER = ["s_m", "x_m", "y_m", "psi_rad", "kappa_radpm", "vx_mps"]


def save_raceline(line, path):
    with open(path, "w") as fh:
        fh.write(",".join(RACELINE_HEADER) + "\n")
        for row in zip(line.s, line.x, line.y, line.psi, line.kappa, line.v):
            fh.write(",".join(f"{val:.12g}" for val in row) + "\n")


def load_raceline(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise TrackFormatError(f"{path}: empty raceline file")
    header = [h.strip() for h in lines[0].split(",")]
    if header != RACELINE_HEADER:
        raise TrackFormatError(f"{path}: bad header {header}, expected {RACELINE_HEADER}")
    if len(lines) == 1:
        raise TrackFormatError(f"{path}: raceline file has no waypoints")
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        parts = line.split(",")
        if len(parts) != 6:
            raise TrackFormatError(f"{path}:{lineno}: expected 6 fields")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise TrackFormatError(f"{path}:{lineno}: non-numeric field") from None
    arr = np.array(rows)
    return Raceline(s=arr[:, 0], x=arr[:, 1], y=arr[:, 2], psi=arr[:, 3],
                    kappa=arr[:, 4], v=arr[:, 5])
