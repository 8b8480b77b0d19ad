"""Experiment harness: configuration, training runs, evaluation and analysis."""

from ..normalize import normalize_io
from .analysis import EmbodimentUsageMap, aggregate_curves, door_preference, embodiment_heatmap, export_curves, export_heatmap
from .config import RunConfig, load_config, save_config
from .evaluate import EvalReport, FlatController, HrlController, OracleController, RandomController, evaluate_controller
from .train import evaluate_checkpoint, read_metrics, train, train_seed

__all__ = [
    "EmbodimentUsageMap",
    "EvalReport",
    "FlatController",
    "HrlController",
    "OracleController",
    "RandomController",
    "RunConfig",
    "aggregate_curves",
    "door_preference",
    "embodiment_heatmap",
    "evaluate_checkpoint",
    "evaluate_controller",
    "export_curves",
    "export_heatmap",
    "load_config",
    "normalize_io",
    "read_metrics",
    "save_config",
    "train",
    "train_seed",
]
