"""Hypermedia tic-tac-toe with Q-learning agents and agent-to-agent advice."""

from .game import BotKind, BotStrategy, GameState, Mark, Square, Status
from .policy import HyperParams, QTable, RunState
from .transfer import TransferConfig

__version__ = "0.1.0"

__all__ = [
    "BotKind", "BotStrategy", "GameState", "HyperParams", "Mark", "QTable",
    "RunState", "Square", "Status", "TransferConfig", "__version__",
]
