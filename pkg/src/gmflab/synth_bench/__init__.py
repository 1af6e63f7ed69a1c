"""Synthetic multimodal benchmark, fusion training harness and metrics."""
from .data import Dataset, SyntheticSpec, generate_dataset, load_dataset, save_dataset, stratified_split
from .metrics import auc, linear_r2, recall_at_k
from .train import FusionModel, FusionRun, TrainConfig, missing_modality_eval, train_fusion

__all__ = [
    "Dataset", "SyntheticSpec", "generate_dataset", "load_dataset", "save_dataset",
    "stratified_split", "auc", "linear_r2", "recall_at_k", "FusionModel", "FusionRun",
    "TrainConfig", "missing_modality_eval", "train_fusion",
]
