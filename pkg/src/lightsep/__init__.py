"""Lightweight band-split music source separation."""
from .config import ModelConfig, STFTConfig, TrainConfig, load_config, preset
from .network import BandSplitSeparator, count_parameters

__all__ = [
    "BandSplitSeparator",
    "ModelConfig",
    "STFTConfig",
    "TrainConfig",
    "count_parameters",
    "load_config",
    "preset",
]
__version__ = "0.1.0"
