from bqn.rl.envs import CatchEnv, GridworldEnv, make_env
from bqn.rl.preprocess import Preprocessor, stack_frames
from bqn.rl.replay import EpsilonSchedule, ReplayBuffer, Transition, clip_reward
from bqn.rl.agent import (
    calibrate_scaleshift,
    compute_target,
    compute_targets,
    init_pair,
    select_action,
    sync_target,
)
from bqn.rl.loop import EvalResult, TrainResult, evaluate, train

__all__ = [
    "CatchEnv",
    "EpsilonSchedule",
    "EvalResult",
    "GridworldEnv",
    "Preprocessor",
    "ReplayBuffer",
    "TrainResult",
    "Transition",
    "clip_reward",
    "compute_target",
    "compute_targets",
    "evaluate",
    "init_pair",
    "make_env",
    "select_action",
    "stack_frames",
    "sync_target",
    "train",
]
