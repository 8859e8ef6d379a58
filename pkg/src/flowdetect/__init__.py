"""CNN-BiLSTM anomaly detection over NetFlow records, built on a small numpy layer engine."""

from .dataflow import FlowRecord, PreprocStats, WindowSet, load_csv
from .metrics import ConfusionMatrix, MetricsReport, compute_metrics, confusion
from .model import Checkpoint, ModelConfig, load_checkpoint, save_checkpoint
from .pipeline import TrainConfig, calibrate_threshold, evaluate, prepare, train
from .tensor import Rng

__all__ = [
    "Checkpoint",
    "ConfusionMatrix",
    "FlowRecord",
    "MetricsReport",
    "ModelConfig",
    "PreprocStats",
    "Rng",
    "TrainConfig",
    "WindowSet",
    "calibrate_threshold",
    "compute_metrics",
    "confusion",
    "evaluate",
    "load_checkpoint",
    "load_csv",
    "prepare",
    "save_checkpoint",
    "train",
]
