"""Adversarial imitation reasoning over temporal knowledge graphs."""

from .config import RunConfig, TrainConfig
from .errors import TKGRError
from .graph import Quadruple, TemporalKG, build_graph
from .model import Reasoner
from .trainer import Trainer

__all__ = ["Quadruple", "Reasoner", "RunConfig", "TKGRError", "TemporalKG", "Trainer",
           "TrainConfig", "build_graph"]
__version__ = "0.1.0"
