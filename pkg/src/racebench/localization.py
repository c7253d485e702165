"""Particle-filter localisation from commanded actions and LiDAR scans.

Motion updates push every particle through the kinematic single-track model
under the commanded speed/steering plus per-particle Gaussian noise; the
measurement update weights particles by independent Gaussian beam
likelihoods on a subsampled scan, then resamples systematically.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DegenerateBeliefError


@dataclass(frozen=True)
class PfConfig:
    n_particles: int = 1000
    noise_v: float = 0.05        # std on commanded speed (m/s)
    noise_delta: float = 0.02    # std on commanded steering (rad)
    noise_theta: float = 0.006   # std added to heading per update (rad)
    n_likelihood_beams: int = 30
    beam_std: float = 0.10       # measurement likelihood std (m)
    # mixture weight of a uniform outlier component per beam: grazing
    # beams swing by decimeters for centimeter pose changes, and a pure
    # Gaussian product lets single beams dominate the weights
    outlier_weight: float = 0.2
    resample_scheme: str = "systematic"
    init_std_xy: float = 0.2
    init_std_theta: float = 0.1

    def __post_init__(self):
        if self.n_particles < 1:
            raise ConfigError("need at least one particle")
        for name in ("noise_v", "noise_delta", "noise_theta"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.beam_std <= 0:
            raise ConfigError("beam_std must be > 0")
        if self.resample_scheme != "systematic":
            raise ConfigError(f"unknown resample scheme {self.resample_scheme!r}")


@dataclass
class ParticleSet:
    poses: np.ndarray    # (N, 3): x, y, theta
    weights: np.ndarray  # (N,), nonnegative, summing to 1

    @property
    def n(self):
        return len(self.weights)


def init_particles(pose, config, rng):
    """Gaussian cloud around a known start pose with uniform weights."""
    n = config.n_particles
    poses = np.empty((n, 3))
    poses[:, 0] = pose[0] + rng.normal(0.0, config.init_std_xy, n)
    poses[:, 1] = pose[1] + rng.normal(0.0, config.init_std_xy, n)
    poses[:, 2] = pose[2] + rng.normal(0.0, config.init_std_theta, n)
    return ParticleSet(poses=poses, weights=np.full(n, 1.0 / n))


def motion_update(particles, action, dt, rng, vehicle, config):
    """Advance particles by the kinematic model under a noisy commanded action."""
    if not dt > 0:
        raise ConfigError("dt must be > 0")
    v_cmd, delta_cmd = action
    n = particles.n
    v = v_cmd + rng.normal(0.0, config.noise_v, n)
    delta = delta_cmd + rng.normal(0.0, config.noise_delta, n)
    theta = particles.poses[:, 2]
    poses = particles.poses.copy()
    poses[:, 0] += v * np.cos(theta) * dt
    poses[:, 1] += v * np.sin(theta) * dt
    poses[:, 2] = theta + v * np.tan(delta) / vehicle.L * dt \
        + rng.normal(0.0, config.noise_theta, n)
    return ParticleSet(poses=poses, weights=particles.weights.copy())


def _likelihood_beam_indices(n_beams, n_sub):
    return np.unique(np.round(np.linspace(0, n_beams - 1, n_sub)).astype(int))


def measurement_update(particles, scan, df, config):
    """Reweight particles by per-beam Gaussian-plus-outlier likelihoods.

    Particles with zero clearance get weight 0. Raises
    DegenerateBeliefError when every weight collapses.
    """
    idx = _likelihood_beam_indices(scan.n_beams, config.n_likelihood_beams)
    bearings = scan.beam_bearings()[idx]
    observed = scan.ranges[idx]
    b = len(idx)

    poses = particles.poses
    n = particles.n
    angles = (poses[:, 2][:, None] + bearings[None, :]).ravel()
    xs = np.repeat(poses[:, 0], b)
    ys = np.repeat(poses[:, 1], b)
    expected = kernels.march_rays(
        df.values, df.resolution, df.origin, xs, ys, angles, scan.max_range
    ).reshape(n, b)

    resid = expected - observed[None, :]
    eps = config.outlier_weight
    log_gauss = np.log1p(-eps) - 0.5 * (resid / config.beam_std) ** 2
    log_unif = math.log(eps / scan.max_range) + math.log(
        config.beam_std * math.sqrt(2.0 * math.pi))
    loglik = np.logaddexp(log_gauss, log_unif).sum(axis=1)

    # zero clearance means the particle sits in (or outside) a wall
    free = df.values_at(poses[:, 0], poses[:, 1]) > 0.0
    loglik[~free] = -np.inf

    if not free.any():
        raise DegenerateBeliefError("all particles inside obstacles")
    shift = loglik[free].max()
    lik = np.exp(loglik - shift)
    w = particles.weights * lik
    total = w.sum()
    if total <= 0.0 or not math.isfinite(total):
        raise DegenerateBeliefError("all particle weights collapsed to zero")
    return ParticleSet(poses=poses.copy(), weights=w / total)


def estimate(particles):
    """Weighted mean pose; heading via the weighted circular mean."""
    w = particles.weights
    x = float(w @ particles.poses[:, 0])
    y = float(w @ particles.poses[:, 1])
    theta = math.atan2(
        float(w @ np.sin(particles.poses[:, 2])),
        float(w @ np.cos(particles.poses[:, 2])),
    )
    return np.array([x, y, theta])


def resample(particles, rng):
    """Systematic resampling; expected copy count of particle i is N*w_i."""
    n = particles.n
    cum = np.cumsum(particles.weights)
    cum[-1] = 1.0
    positions = (rng.uniform(0.0, 1.0) + np.arange(n)) / n
    idx = np.searchsorted(cum, positions, side="right")
    idx = np.minimum(idx, n - 1)
    return ParticleSet(poses=particles.poses[idx].copy(),
                       weights=np.full(n, 1.0 / n))


class ParticleFilter:
    """Full filter: motion + measurement + estimate + resample per update.

    The estimate is the weighted mean unless that falls in occupied space,
    in which case the best particle substitutes (the belief is multimodal
    around an obstacle in that case).
    """

    def __init__(self, df, vehicle, config=None):
        self.df = df
        self.vehicle = vehicle
        self.config = config or PfConfig()
        self.particles = None
        self.rng = None
        self.last_estimate = None
        self.reinit_count = 0

    def reset(self, pose, rng):
        self.rng = rng
        self.particles = init_particles(pose, self.config, rng)
        self.last_estimate = np.asarray(pose, dtype=float).copy()

    def update(self, action, dt, scan):
        """One filter cycle; returns the pose estimate."""
        self.particles = motion_update(
            self.particles, action, dt, self.rng, self.vehicle, self.config
        )
        try:
            self.particles = measurement_update(
                self.particles, scan, self.df, self.config
            )
        except DegenerateBeliefError:
            # belief collapsed: reinitialise around the last estimate
            self.reinit_count += 1
            self.particles = init_particles(self.last_estimate, self.config, self.rng)

        est = estimate(self.particles)
        if self.df.value_at(est[0], est[1]) <= 0.0:
            best = int(np.argmax(self.particles.weights))
            est = self.particles.poses[best].copy()
        self.last_estimate = est
        self.particles = resample(self.particles, self.rng)
        return est
