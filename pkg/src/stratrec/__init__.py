"""Persuasive-strategy recognition for dyadic dialogues, with a per-dialogue
memory that tracks which strategies were tried and how the persuadee reacted.
"""

__version__ = "0.1.0"

from .config import ModelConfig
from .corpus import Dialogue, Utterance, Vocab
from .model import StrategyModel

__all__ = ["ModelConfig", "Dialogue", "Utterance", "Vocab", "StrategyModel", "__version__"]
