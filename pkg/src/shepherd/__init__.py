"""Shepherding simulator, heuristic baseline and from-scratch PPO/MAPPO controllers."""
from .env import EpisodeConfig, EpisodeRecord, RewardGains, run_episode
from .heuristic import HeuristicController, HeuristicParams
from .kernels import BACKEND
from .sim import SimParams, WorldState

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "EpisodeConfig",
    "EpisodeRecord",
    "HeuristicController",
    "HeuristicParams",
    "RewardGains",
    "SimParams",
    "WorldState",
    "run_episode",
]
