"""配置模块."""

from src.config.settings import Settings, get_settings
from src.config.experiment import (
    GRAYBOX_TRUNCATION,
    TRUNCATION_FRACTIONS,
    WHITEBOX_TRUNCATION,
    ArtifactPaths,
    AttackConfig,
    DatasetSpec,
    ExperimentConfig,
    SweepSpec,
    TrainConfig,
    config_hash,
    load_experiment,
    save_experiment,
)

__all__ = [
    "Settings",
    "get_settings",
    "GRAYBOX_TRUNCATION",
    "TRUNCATION_FRACTIONS",
    "WHITEBOX_TRUNCATION",
    "ArtifactPaths",
    "AttackConfig",
    "DatasetSpec",
    "ExperimentConfig",
    "SweepSpec",
    "TrainConfig",
    "config_hash",
    "load_experiment",
    "save_experiment",
]
