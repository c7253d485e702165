from .buffer import ReplayBuffer
from .mlp import Mlp, SgdOptimizer
from .rewards import REWARD_KINDS, RewardContext, reward
from .td3 import Td3Agent, Td3Config, bellman_targets
from .train import (
    AgentConfig,
    AgentPlanner,
    TrainConfig,
    decode_action,
    downsample_scan,
    encode_action,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "AgentConfig", "AgentPlanner", "Mlp", "REWARD_KINDS", "ReplayBuffer",
    "RewardContext", "SgdOptimizer", "Td3Agent", "Td3Config", "TrainConfig",
    "bellman_targets", "decode_action", "downsample_scan", "encode_action",
    "load_checkpoint", "reward", "save_checkpoint", "train",
]
