"""Multi-agent limit-order-book market simulator with an optimal-execution
RL environment, DQN trainer, baseline strategies and evaluation harness."""

from .execenv import ExecConfig, ExecutionEnv
from .kernel import MarketConfig, MarketSession, kernel_run
from .lob import OrderBook, Side

__all__ = [
    "ExecConfig",
    "ExecutionEnv",
    "MarketConfig",
    "MarketSession",
    "OrderBook",
    "Side",
    "kernel_run",
]

__version__ = "0.1.0"
