"""UAV-assisted status-update collection: grid-world MDP, DQN trainer,
heuristic baselines, exact solver, and a seeded experiment harness."""

__version__ = "0.1.0"

from .model import (
    AoIVector,
    ConfigError,
    EnergyParams,
    GridSpec,
    InfeasibleLinkError,
    LinkParams,
    Move,
    OutOfBoundsError,
    RewardParams,
    SensorNode,
    TerminalKind,
)
from .env import (
    Action,
    EpisodeConfig,
    EpisodeRecord,
    InvalidActionError,
    StepOutcome,
    SystemState,
)
from .agent import TrainConfig

__all__ = [
    "Action",
    "AoIVector",
    "ConfigError",
    "EnergyParams",
    "EpisodeConfig",
    "EpisodeRecord",
    "GridSpec",
    "InfeasibleLinkError",
    "InvalidActionError",
    "LinkParams",
    "Move",
    "OutOfBoundsError",
    "RewardParams",
    "SensorNode",
    "StepOutcome",
    "SystemState",
    "TerminalKind",
    "TrainConfig",
    "__version__",
]
