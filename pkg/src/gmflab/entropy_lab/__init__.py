"""Entropy/mutual-information estimators and the dimension/rank experiments."""
from .estimators import HistogramEstimator, histogram_entropy, joint_entropy, mutual_information
from .experiments import (MappingExperimentConfig, WidthSweepConfig, build_probe, mapping_task,
                          up_down_experiment, width_sweep, width_task)
from .rank import RankTrialConfig, RankTrialResult, numerical_rank, rank_trial

__all__ = [
    "HistogramEstimator", "histogram_entropy", "joint_entropy", "mutual_information",
    "MappingExperimentConfig", "WidthSweepConfig", "build_probe", "mapping_task",
    "up_down_experiment", "width_sweep", "width_task", "RankTrialConfig", "RankTrialResult",
    "numerical_rank", "rank_trial",
]
