"""End-to-end TD3 training against the episode engine.

Observations stack the previous and current downsampled scans with the
normalised speed; actions decode to (steering, speed) targets. Episodes
spawn at random centerline positions and run until crash, lap, or the
step cap. The learning curve logs mean/min/max episode progress per
evaluation window.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..simulator import Simulation, cast_scan
from ..util import wrap_to_pi
from .buffer import ReplayBuffer
from .rewards import REWARD_KINDS, RewardContext, reward
from .td3 import Td3Agent, Td3Config


@dataclass(frozen=True)
class AgentConfig:
    n_downsampled: int = 20
    v_min: float = 1.0

    def obs_dim(self):
        return 2 * self.n_downsampled + 1


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 30_000
    eval_window: int = 2_000
    max_episode_steps: int = 1_500
    agent: AgentConfig = field(default_factory=AgentConfig)
    td3: Td3Config = field(default_factory=Td3Config)


def downsample_scan(scan, n_ds):
    idx = np.round(np.linspace(0, scan.n_beams - 1, n_ds)).astype(int)
    return np.clip(scan.ranges[idx] / scan.max_range, 0.0, 1.0)


def build_observation(prev_ds, cur_ds, speed, vehicle):
    return np.concatenate([prev_ds, cur_ds, [min(speed / vehicle.v_max, 1.0)]])


def decode_action(a, vehicle, v_min):
    """[-1,1]^2 -> (target_speed, target_delta)."""
    delta = float(a[0]) * vehicle.delta_max
    v = (float(a[1]) + 1.0) * 0.5 * (vehicle.v_max - v_min) + v_min
    return v, delta


def encode_action(v, delta, vehicle, v_min):
    """(speed, steering) -> normalised [-1,1]^2, clipped."""
    a0 = delta / vehicle.delta_max
    a1 = 2.0 * (v - v_min) / (vehicle.v_max - v_min) - 1.0
    return np.clip([a0, a1], -1.0, 1.0)


class AgentPlanner:
    """Frozen-policy planner for the episode engine (greedy actions)."""

    name = "e2e"

    def __init__(self, agent, vehicle, config=None):
        self.agent = agent
        self.vehicle = vehicle
        self.config = config or AgentConfig()
        self._prev_ds = None

    def reset(self):
        self._prev_ds = None

    def plan(self, obs):
        cur = downsample_scan(obs.scan, self.config.n_downsampled)
        if self._prev_ds is None:
            self._prev_ds = cur
        x = build_observation(self._prev_ds, cur, obs.speed, self.vehicle)
        self._prev_ds = cur
        a = self.agent.act(x)
        return decode_action(a, self.vehicle, self.config.v_min)


def _reward_context(sim, action_norm, classic_norm, prev_s_frac):
    param = sim.param
    s_raw, dist = param.project(sim.state.x, sim.state.y)
    wl, wr = param.widths_at(s_raw)
    half = float(min(wl, wr))
    return RewardContext(
        v_t=min(sim.state.v / sim.vehicle.v_max, 1.0),
        psi_err=wrap_to_pi(sim.state.theta - float(param.phi_at(s_raw))),
        d_c=min(dist / half, 1.0) if half > 0 else 0.0,
        s_t=sim.tracker.progress / param.length,
        s_prev=prev_s_frac,
        u_agent=tuple(action_norm),
        u_classic=tuple(classic_norm) if classic_norm is not None else (0.0, 0.0),
    )


def train(param, df, vehicle, sim_config, reward_kind, seed,
          train_config=None, classical_planner=None, progress_cb=None):
    """Train one TD3 agent; returns (agent, learning_curve rows).

    classical_planner supplies u_classic for the tal reward (queried at the
    same observation each step) and is required for that signal.
    """
    if reward_kind not in REWARD_KINDS:
        raise ConfigError(f"unknown reward kind {reward_kind!r}")
    if reward_kind == "tal" and classical_planner is None:
        raise ConfigError("tal reward needs the classical planner")
    tc = train_config or TrainConfig()
    ac = tc.agent
    td3 = tc.td3
    rng = np.random.default_rng(seed)

    agent = Td3Agent(ac.obs_dim(), 2, td3, rng)
    buffer = ReplayBuffer(td3.buffer_capacity, ac.obs_dim(), 2)
    sim = Simulation(param, df, vehicle, sim_config)

    curve = []
    window_progress = []
    step = 0
    while step < tc.steps:
        start_s = rng.uniform(0.0, param.length)
        sim.reset(start_s, rng)
        if classical_planner is not None and hasattr(classical_planner, "reset"):
            classical_planner.reset()
        scan = sim.observe()
        prev_ds = cur_ds = downsample_scan(scan, ac.n_downsampled)
        obs = build_observation(prev_ds, cur_ds, sim.state.v, vehicle)
        ep_steps = 0

        while step < tc.steps:
            if step < td3.warmup_steps:
                a = rng.uniform(-1.0, 1.0, size=2)
            else:
                a = agent.act(obs, rng=rng, noise_std=td3.exploration_std)
            v_cmd, d_cmd = decode_action(a, vehicle, ac.v_min)

            classic_norm = None
            if classical_planner is not None:
                from ..simulator import PlannerObs
                cv, cd = classical_planner.plan(PlannerObs(
                    pose=sim.pose, speed=sim.state.v, scan=scan, step=ep_steps))
                classic_norm = encode_action(cv, cd, vehicle, ac.v_min)

            prev_s_frac = sim.tracker.progress / param.length
            terminal = sim.step((v_cmd, d_cmd))
            ep_steps += 1
            step += 1
            if not terminal and ep_steps >= tc.max_episode_steps:
                terminal = "timeout"
                sim.terminal = terminal

            ctx = _reward_context(sim, a, classic_norm, prev_s_frac)
            r = reward(reward_kind, ctx, terminal)
            done = terminal in ("crash", "lap_complete")

            if terminal:
                nxt_obs = obs  # unused at terminal transitions
            else:
                scan = sim.observe()
                prev_ds, cur_ds = cur_ds, downsample_scan(scan, ac.n_downsampled)
                nxt_obs = build_observation(prev_ds, cur_ds, sim.state.v, vehicle)
            buffer.add(obs, a, r, nxt_obs, done)
            obs = nxt_obs

            if step >= td3.warmup_steps and buffer.size >= td3.batch_size:
                agent.update(buffer, rng)

            if step % tc.eval_window == 0:
                vals = window_progress or [0.0]
                curve.append((step, float(np.mean(vals)), float(np.min(vals)),
                              float(np.max(vals))))
                if progress_cb is not None:
                    progress_cb(step, curve[-1])
                window_progress = []
            if terminal:
                break
        window_progress.append(min(1.0, sim.tracker.progress / param.length))
    return agent, curve


# ---------------------------------------------------------------------------
# checkpoints: versioned text dump, endianness-free
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = "racebench-td3-v1"


def save_checkpoint(agent, path, extra=None):
    nets = [("actor", agent.actor), ("critic1", agent.critic1),
            ("critic2", agent.critic2), ("target_actor", agent.target_actor),
            ("target_critic1", agent.target_critic1),
            ("target_critic2", agent.target_critic2)]
    with open(path, "w") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        fh.write(f"obs_dim={agent.obs_dim} act_dim={agent.act_dim} "
                 f"hidden={agent.config.hidden}\n")
        if extra:
            for key, val in sorted(extra.items()):
                fh.write(f"# {key}={val}\n")
        for name, net in nets:
            for kind, arrs in (("W", net.weights), ("b", net.biases)):
                for i, arr in enumerate(arrs):
                    flat = np.asarray(arr).ravel()
                    fh.write(f"{name}.{kind}{i} {' '.join(str(d) for d in np.shape(arr))}\n")
                    fh.write(" ".join(f"{v:.17g}" for v in flat) + "\n")


def load_checkpoint(path, config=None):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ConfigError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    header = dict(kv.split("=") for kv in lines[1].split())
    obs_dim = int(header["obs_dim"])
    act_dim = int(header["act_dim"])
    hidden = int(header["hidden"])
    cfg = config or Td3Config(hidden=hidden)
    agent = Td3Agent(obs_dim, act_dim, cfg, np.random.default_rng(0))
    nets = {"actor": agent.actor, "critic1": agent.critic1,
            "critic2": agent.critic2, "target_actor": agent.target_actor,
            "target_critic1": agent.target_critic1,
            "target_critic2": agent.target_critic2}
    i = 2
    while i < len(lines):
        if lines[i].startswith("#") or not lines[i].strip():
            i += 1
            continue
        tag, *shape = lines[i].split()
        vals = np.array([float(v) for v in lines[i + 1].split()])
        name, slot = tag.split(".")
        arr = vals.reshape([int(s) for s in shape]) if shape else vals
        target = nets[name].weights if slot[0] == "W" else nets[name].biases
        target[int(slot[1:])][...] = arr
        i += 2
    return agent
