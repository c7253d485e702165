"""The three shaped reward signals plus terminal bonuses.

Lap completion pays +1, crashing pays -1; otherwise:
  cth      - normalised speed along the track minus cross-track distance
  progress - per-step centerline progress (normalised by track length)
  tal      - closeness of the agent's action to the classical planner's,
             1 - |u_agent - u_classic|_1 / 2, so the step reward sits in [0, 1]
"""

import math
from dataclasses import dataclass

import numpy as np

REWARD_KINDS = ("cth", "progress", "tal")


@dataclass(frozen=True)
class RewardContext:
    v_t: float = 0.0          # speed normalised by v_max
    psi_err: float = 0.0      # heading error to the track direction (rad)
    d_c: float = 0.0          # cross-track distance normalised by half-width
    s_t: float = 0.0          # progress normalised by track length
    s_prev: float = 0.0
    u_agent: tuple = (0.0, 0.0)    # normalised action in [-1, 1]^2
    u_classic: tuple = (0.0, 0.0)  # classical planner's action, same space


def reward(kind, ctx, terminal=""):
    """Scalar reward for one control step."""
    if terminal == "lap_complete":
        return 1.0
    if terminal == "crash":
        return -1.0
    if kind == "cth":
        return ctx.v_t * math.cos(ctx.psi_err) - ctx.d_c
    if kind == "progress":
        return ctx.s_t - ctx.s_prev
    if kind == "tal":
        dist = abs(ctx.u_agent[0] - ctx.u_classic[0]) \
            + abs(ctx.u_agent[1] - ctx.u_classic[1])
        return 1.0 - 0.5 * dist
    raise ValueError(f"unknown reward kind {kind!r}")
