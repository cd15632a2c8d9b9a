"""实验服务：train / sample / attack 三个命令的实现."""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd
from loguru import logger

from src.config import AttackConfig, ExperimentConfig, config_hash, get_settings, save_experiment
from src.data import storage
from src.data.checkpoint import load_checkpoint, save_checkpoint
from src.data.datasets import Dataset, QuerySet, SplitSpec, make_dataset, split
from src.diffusion.model import DiffusionModel, ancestral_sample
from src.enums import AttackScenario
from src.exceptions import ConfigError
from src.services.attack_service import AttackOutcome, AttackService
from src.services.training_service import TrainingResult, TrainingService
from src.utils.seeding import derive_seed

PathLike = Union[str, Path]


@dataclass(frozen=True)
class PreparedData:
    """按成员统计量标准化后的数据集、划分与查询集."""

    dataset: Dataset
    split: SplitSpec
    query: QuerySet

    @property
    def member_points(self):
        """成员样本（训练集）."""
        return self.dataset.points[list(self.split.member_ids)]


def prepare_data(
    config: ExperimentConfig, member_count: Optional[int] = None, seed: Optional[int] = None
) -> PreparedData:
    """生成数据集并划分，标准化只使用成员样本的统计量."""
    seed = config.dataset_seed if seed is None else seed
    spec = config.dataset
    member_count = spec.member_count if member_count is None else member_count
    raw = make_dataset(spec, seed)
    split_spec = split(raw, member_count, spec.query_size, seed)
    dataset = raw.standardized(split_spec.member_ids)
    return PreparedData(dataset=dataset, split=split_spec, query=QuerySet.from_split(dataset, split_spec))


class ExperimentService:
    """实验服务类."""

    CHECKPOINT_NAME = "target.ckpt"
    SAMPLES_NAME = "samples.csv"

    def __init__(self, config: ExperimentConfig, out_dir: Optional[PathLike] = None):
        """初始化实验服务.

        Args:
            config: 实验配置
            out_dir: 输出目录，缺省时使用配置中的 output_dir
        """
        self.settings = get_settings()
        self.config = config
        self.out_dir = Path(out_dir or config.output_dir or self.settings.default_output_dir)

    @property
    def checkpoint_path(self) -> Path:
        """目标模型检查点路径."""
        explicit = self.config.artifacts.checkpoint
        return Path(explicit) if explicit else self.out_dir / self.CHECKPOINT_NAME

    @property
    def samples_path(self) -> Path:
        """生成样本路径."""
        explicit = self.config.artifacts.synthetic_samples
        return Path(explicit) if explicit else self.out_dir / self.SAMPLES_NAME

    @property
    def shadow_checkpoint_path(self) -> Optional[Path]:
        """显式指定的影子模型检查点."""
        explicit = self.config.artifacts.shadow_checkpoint
        return Path(explicit) if explicit else None

    def _prepare_out_dir(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        save_experiment(self.config, self.out_dir / "config.json")

    def train(self) -> TrainingResult:
        """训练目标模型并写出检查点、损失日志、数据集与划分."""
        self._prepare_out_dir()
        data = prepare_data(self.config)
        result = TrainingService().train_model(data.member_points, self.config.train, self.config.train_seed)
        save_checkpoint(result.model, self.out_dir / self.CHECKPOINT_NAME)
        storage.save_loss_log(result.loss_log, self.out_dir / "loss_log.csv")
        storage.save_dataset(data.dataset, self.out_dir / "dataset.csv")
        storage.save_split(data.split, self.out_dir / "split.json")
        return result

    def load_target(self) -> DiffusionModel:
        """读取目标模型检查点."""
        path = self.checkpoint_path
        if not path.exists():
            raise ConfigError(f"checkpoint not found: {path} (run 'train' first or set artifacts.checkpoint)")
        return load_checkpoint(path)

    def sample(self, count: int) -> Path:
        """从目标模型祖先采样并写出 CSV."""
        model = self.load_target()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        samples = ancestral_sample(model, count, derive_seed(self.config.seed, "synthetic"))
        path = storage.save_samples(samples, self.out_dir / self.SAMPLES_NAME)
        logger.info(f"Wrote {count} samples to {path}")
        return path

    def check_artifacts(self, attacks: List[AttackConfig]) -> None:
        """在执行前确认每个攻击所需的产物都存在."""
        for attack in attacks:
            scenario = attack.scenario
            has_checkpoint = self.checkpoint_path.exists()
            if scenario in (AttackScenario.WHITE_BOX, AttackScenario.GRAY_BOX) and not has_checkpoint:
                raise ConfigError(f"{scenario.value} attack needs a checkpoint at {self.checkpoint_path}")
            if scenario is AttackScenario.BLACK_BOX_SPECIFIC:
                shadow_path = self.shadow_checkpoint_path
                if shadow_path is not None and not shadow_path.exists():
                    raise ConfigError(f"shadow checkpoint not found: {shadow_path}")
                if shadow_path is None and not has_checkpoint:
                    raise ConfigError(f"model-specific attack needs a target checkpoint at {self.checkpoint_path}")
            if scenario is AttackScenario.BLACK_BOX_AGNOSTIC:
                explicit = self.config.artifacts.synthetic_samples
                if explicit and not Path(explicit).exists():
                    raise ConfigError(f"synthetic sample file not found: {explicit}")
                if not self.samples_path.exists() and not has_checkpoint:
                    raise ConfigError(
                        f"model-agnostic attack needs synthetic samples or a checkpoint at {self.checkpoint_path}"
                    )

    def check_dataset(self, data: PreparedData) -> None:
        """``train`` 写出的数据集必须与按当前配置生成的一致."""
        path = self.out_dir / "dataset.csv"
        if not path.exists():
            return
        saved = storage.load_dataset(path)
        if not np.array_equal(saved.raw_points, data.dataset.raw_points):
            raise ConfigError(f"{path} does not match the configured dataset; rerun 'train' for this config")

    def attack(self, scenario: Optional[AttackScenario] = None) -> List[AttackOutcome]:
        """执行配置中的攻击，写出分数、ROC 与报告.

        Args:
            scenario: 只执行该场景的攻击；配置中没有时使用该场景的默认配置

        Returns:
            List[AttackOutcome]: 每个攻击配置一个结果
        """
        attacks = list(self.config.attacks)
        if scenario is not None:
            attacks = [a for a in attacks if a.scenario is scenario] or [AttackConfig(scenario=scenario)]
        if not attacks:
            raise ConfigError("no attacks configured")
        self.check_artifacts(attacks)

        data = prepare_data(self.config)
        self.check_dataset(data)
        self._prepare_out_dir()
        target = self.load_target() if self.checkpoint_path.exists() else None
        shadow = load_checkpoint(self.shadow_checkpoint_path) if self.shadow_checkpoint_path else None
        synthetic = None
        if self.samples_path.exists():
            synthetic = storage.load_samples(self.samples_path)
            logger.info(f"Using {len(synthetic)} synthetic samples from {self.samples_path}")
        service = AttackService(self.config.fpr_targets, self.config.seed)

        outcomes = []
        for attack in attacks:
            metadata = {
                "name": self.config.name,
                "member_count": self.config.dataset.member_count,
                "config_hash": config_hash(
                    {"experiment": self.config.model_dump(mode="json"), "attack": attack.model_dump(mode="json")}
                ),
            }
            outcome = service.run(
                attack,
                data.query,
                target=target,
                shadow_config=self.config.shadow_config,
                synthetic=synthetic,
                shadow=shadow,
                metadata=metadata,
            )
            scores_frame = outcome.scores.to_frame(data.query.labels)
            storage.write_frame(scores_frame, self.out_dir / "scores" / f"{attack.label}.csv")
            storage.write_frame(outcome.roc.to_frame(), self.out_dir / "roc" / f"{attack.label}.csv")
            outcomes.append(outcome)

        records = [o.report.to_record() for o in outcomes]
        storage.write_frame(pd.DataFrame(records), self.out_dir / "reports.csv")
        storage.write_records(records, self.out_dir / "report.json")
        return outcomes


def cmd_train(config: ExperimentConfig, out_dir: Optional[PathLike] = None) -> Path:
    """train 命令：返回检查点路径."""
    service = ExperimentService(config, out_dir)
    service.train()
    return service.out_dir / ExperimentService.CHECKPOINT_NAME


def cmd_sample(config: ExperimentConfig, out_dir: Optional[PathLike] = None, count: Optional[int] = None) -> Path:
    """sample 命令：返回样本文件路径."""
    service = ExperimentService(config, out_dir)
    if count is None:
        count = config.attacks[0].synthetic_count if config.attacks else AttackConfig().synthetic_count
    return service.sample(count)


def cmd_attack(
    config: ExperimentConfig, out_dir: Optional[PathLike] = None, scenario: Optional[AttackScenario] = None
) -> List[AttackOutcome]:
    """attack 命令."""
    return ExperimentService(config, out_dir).attack(scenario)
