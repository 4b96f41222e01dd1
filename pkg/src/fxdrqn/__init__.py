"""Online deep recurrent Q-learning for spot FX trading."""

from .agent import AgentConfig, DRQNAgent, ReplayMemory
from .env import TradingEnv
from .marketdata import AlignedDataset, Bar, TickRecord
from .trainer import OnlineTrainer, RunConfig, RunLog, run, run_suite

__all__ = [
    "AgentConfig", "AlignedDataset", "Bar", "DRQNAgent", "OnlineTrainer", "ReplayMemory",
    "RunConfig", "RunLog", "TickRecord", "TradingEnv", "run", "run_suite",
]
__version__ = "0.1.0"
