"""Learned redundant dispatch of service requests across edge servers."""

from .domain import ActionSet, EdgeServerState, EnvState, ServiceProfile, StateEncoder, UserProfile
from .environment import EdgeEnvironment, SimConfig
from .learner import ExploreSchedule, RewardTargetClassifier, load_checkpoint, save_checkpoint
from .policy import RewardParams, build_target_vector, reward, target_latency

__version__ = "0.1.0"

__all__ = [
    "ActionSet", "EdgeServerState", "EnvState", "ServiceProfile", "StateEncoder", "UserProfile",
    "EdgeEnvironment", "SimConfig", "ExploreSchedule", "RewardTargetClassifier", "load_checkpoint",
    "save_checkpoint", "RewardParams", "build_target_vector", "reward", "target_latency",
]
