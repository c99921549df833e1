"""Reputation-aware asynchronous federated learning for trajectory prediction."""

from .config import ScenarioConfig, load_config
from .errors import DegenerateFusionError, InvalidActionError, ParseError, TrainingError, ValidationError

__all__ = [
    "ScenarioConfig",
    "load_config",
    "ValidationError",
    "ParseError",
    "DegenerateFusionError",
    "InvalidActionError",
    "TrainingError",
]
