"""Twin-delayed DDPG: twin critics, target smoothing, delayed policy updates."""

from dataclasses import dataclass

import numpy as np

from ..errors import TrainingDivergedError
from .mlp import Mlp, SgdOptimizer


@dataclass(frozen=True)
class Td3Config:
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 100
    lr: float = 1e-3
    momentum: float = 0.9
    clip_norm: float = 10.0
    policy_delay: int = 2
    smoothing_std: float = 0.2
    smoothing_clip: float = 0.5
    exploration_std: float = 0.1
    buffer_capacity: int = 100_000
    warmup_steps: int = 1000
    hidden: int = 100


def bellman_targets(rewards, dones, gamma, q_next):
    """Standard one-step Bellman targets with terminal bootstrap cutoff."""
    return rewards + gamma * (1.0 - dones) * q_next


class Td3Agent:
    """Actor-critic pair with target networks and SGD-momentum training."""

    def __init__(self, obs_dim, act_dim, config, rng):
        self.config = config
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        h = config.hidden

        def actor():
            return Mlp((obs_dim, h, h, act_dim), "tanh", rng)

        def critic():
            return Mlp((obs_dim + act_dim, h, h, 1), "identity", rng)

        self.actor = actor()
        self.critic1 = critic()
        self.critic2 = critic()
        self.target_actor = actor()
        self.target_critic1 = critic()
        self.target_critic2 = critic()
        self.target_actor.copy_from(self.actor)
        self.target_critic1.copy_from(self.critic1)
        self.target_critic2.copy_from(self.critic2)

        self.opt_actor = SgdOptimizer(self.actor, config.lr, config.momentum,
                                      config.clip_norm)
        self.opt_critic1 = SgdOptimizer(self.critic1, config.lr, config.momentum,
                                        config.clip_norm)
        self.opt_critic2 = SgdOptimizer(self.critic2, config.lr, config.momentum,
                                        config.clip_norm)
        self.updates = 0

    def act(self, obs, rng=None, noise_std=0.0):
        """Policy action in [-1, 1]^act_dim, optionally with exploration noise."""
        a = self.actor.forward(np.asarray(obs, dtype=np.float64))
        if rng is not None and noise_std > 0:
            a = a + rng.normal(0.0, noise_std, size=a.shape)
        return np.clip(a, -1.0, 1.0)

    def update(self, buffer, rng):
        """One TD3 gradient step; returns a diagnostics dict."""
        cfg = self.config
        obs, act, rew, nxt, done = buffer.sample(cfg.batch_size, rng)
        n = len(rew)

        noise = np.clip(
            rng.normal(0.0, cfg.smoothing_std, size=act.shape),
            -cfg.smoothing_clip, cfg.smoothing_clip,
        )
        next_act = np.clip(self.target_actor.forward(nxt) + noise, -1.0, 1.0)
        nxt_in = np.concatenate([nxt, next_act], axis=1)
        q1n = self.target_critic1.forward(nxt_in)[:, 0]
        q2n = self.target_critic2.forward(nxt_in)[:, 0]
        target = bellman_targets(rew, done, cfg.gamma, np.minimum(q1n, q2n))

        cur_in = np.concatenate([obs, act], axis=1)
        losses = {}
        for name, critic, opt in (("critic1", self.critic1, self.opt_critic1),
                                  ("critic2", self.critic2, self.opt_critic2)):
            cache = {}
            q = critic.forward(cur_in, cache)[:, 0]
            err = q - target
            losses[name] = float((err * err).mean())
            grad_out = (2.0 * err / n)[:, None]
            w_g, b_g, _ = critic.backward(cache, grad_out)
            opt.step(w_g, b_g)

        self.updates += 1
        if self.updates % cfg.policy_delay == 0:
            cache_a = {}
            a = self.actor.forward(obs, cache_a)
            cache_q = {}
            q_in = np.concatenate([obs, a], axis=1)
            q = self.critic1.forward(q_in, cache_q)
            losses["actor"] = float(-q.mean())
            # ascend Q1: push -dQ/da through the actor
            _, _, g_in = self.critic1.backward(cache_q, np.full((n, 1), -1.0 / n))
            g_act = g_in[:, self.obs_dim:]
            w_g, b_g, _ = self.actor.backward(cache_a, g_act)
            self.opt_actor.step(w_g, b_g)

            self.target_actor.soft_update_from(self.actor, cfg.tau)
            self.target_critic1.soft_update_from(self.critic1, cfg.tau)
            self.target_critic2.soft_update_from(self.critic2, cfg.tau)

        for val in losses.values():
            if not np.isfinite(val):
                raise TrainingDivergedError(self.updates)
        return losses
