"""Distributed prediction-kernel grids, recurrent baselines and active tuning for 2-D wave data."""

from .active_tuning import ActiveTuner, ATConfig, at_induce
from .checkpoint import Checkpoint, CheckpointError
from .estimators import SequenceForecaster
from .evaluation import EvalConfig, EvalReport, dtw, evaluate
from .models import MODEL_IDS, build_network
from .trainer import TrainConfig, train
from .wavegen import NoiseInjector, WaveConfig, add_noise, make_dataset

__version__ = "0.1.0"

__all__ = [
    "ActiveTuner",
    "ATConfig",
    "at_induce",
    "Checkpoint",
    "CheckpointError",
    "SequenceForecaster",
    "EvalConfig",
    "EvalReport",
    "dtw",
    "evaluate",
    "MODEL_IDS",
    "build_network",
    "TrainConfig",
    "train",
    "NoiseInjector",
    "WaveConfig",
    "add_noise",
    "make_dataset",
]
