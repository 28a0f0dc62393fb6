"""Review-based rating prediction with multi-pointer co-attention, on a numpy autodiff core."""

from .baselines import FMBaseline, MF, MLP
from .config import ExperimentConfig, MpcnConfig, TrainConfig
from .data import Dataset, load_snapshot, prepare
from .model import MPCN
from .trainer import evaluate_mse, train

__version__ = "0.1.0"

__all__ = [
    "MPCN", "MF", "FMBaseline", "MLP",
    "ExperimentConfig", "MpcnConfig", "TrainConfig",
    "Dataset", "prepare", "load_snapshot",
    "train", "evaluate_mse",
]
