"""评估模块."""

from src.evaluation.analysis import StatisticSearch, best_over_statistics, trajectory_profile
from src.evaluation.metrics import (
    AttackReport,
    RocCurve,
    accuracy_f1_at_median,
    build_report,
    roc_curve,
    tpr_at_fpr,
    tpr_column,
)

__all__ = [
    "AttackReport",
    "RocCurve",
    "StatisticSearch",
    "accuracy_f1_at_median",
    "best_over_statistics",
    "build_report",
    "roc_curve",
    "tpr_at_fpr",
    "tpr_column",
    "trajectory_profile",
]
