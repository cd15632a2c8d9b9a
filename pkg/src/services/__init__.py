"""服务模块."""

from src.services.attack_service import AttackOutcome, AttackService
from src.services.experiment_service import ExperimentService, cmd_attack, cmd_sample, cmd_train, prepare_data
from src.services.report_service import ReportService, cmd_report
from src.services.sweep_service import SweepService, cmd_sweep, expand_cells
from src.services.training_service import TrainingResult, TrainingService, train_model, train_shadow

__all__ = [
    "AttackOutcome",
    "AttackService",
    "ExperimentService",
    "ReportService",
    "SweepService",
    "TrainingResult",
    "TrainingService",
    "cmd_attack",
    "cmd_report",
    "cmd_sample",
    "cmd_sweep",
    "cmd_train",
    "expand_cells",
    "prepare_data",
    "train_model",
    "train_shadow",
]
