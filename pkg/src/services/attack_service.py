"""攻击服务：按场景分派攻击并生成评估报告."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from src.attacks import (
    MembershipScores,
    blackbox_agnostic_scores,
    blackbox_specific_scores,
    graybox_scores,
    make_feature_map,
    whitebox_scores,
)
from src.config import AttackConfig, TrainConfig, get_settings
from src.data.datasets import QuerySet
from src.diffusion.model import DiffusionModel, ancestral_sample
from src.enums import AttackScenario
from src.evaluation.metrics import AttackReport, RocCurve, build_report
from src.exceptions import ConfigError
from src.utils.seeding import derive_seed


@dataclass
class AttackOutcome:
    """单次攻击的分数、报告与 ROC 曲线."""

    config: AttackConfig
    scores: MembershipScores
    report: AttackReport
    roc: RocCurve


class AttackService:
    """攻击服务类."""

    def __init__(self, fpr_targets: Sequence[float] = (0.001, 0.01), seed: int = 0):
        """初始化攻击服务.

        Args:
            fpr_targets: 报告 TPR 的 FPR 目标
            seed: 全局种子，用于加噪、生成样本与影子训练
        """
        self.settings = get_settings()
        self.fpr_targets = list(fpr_targets)
        self.seed = seed

    def compute_scores(
        self,
        config: AttackConfig,
        query: QuerySet,
        target: Optional[DiffusionModel] = None,
        shadow_config: Optional[TrainConfig] = None,
        synthetic: Optional[np.ndarray] = None,
        shadow: Optional[DiffusionModel] = None,
    ) -> MembershipScores:
        """按场景计算成员分数.

        Args:
            config: 攻击配置
            query: 查询集
            target: 目标模型（白盒、灰盒与模型特定黑盒需要）
            shadow_config: 影子模型训练配置
            synthetic: 已有的生成样本（模型无关黑盒）
            shadow: 已有的影子模型

        Returns:
            MembershipScores: 成员分数
        """
        scenario = config.scenario
        noise_seed = self.seed
        if scenario in (AttackScenario.WHITE_BOX, AttackScenario.GRAY_BOX, AttackScenario.BLACK_BOX_SPECIFIC):
            if target is None and not (scenario is AttackScenario.BLACK_BOX_SPECIFIC and shadow is not None):
                raise ConfigError(f"{scenario.value} attack needs a target checkpoint")

        if scenario is AttackScenario.WHITE_BOX:
            return whitebox_scores(target, query, config, noise_seed)
        if scenario is AttackScenario.GRAY_BOX:
            return graybox_scores(target, query, config, noise_seed)
        if scenario is AttackScenario.BLACK_BOX_SPECIFIC:
            if shadow is None and shadow_config is None:
                raise ConfigError("model-specific black-box attack needs a shadow training config")
            return blackbox_specific_scores(
                target.as_sampler() if target is not None else None,
                query,
                shadow_config,
                config,
                seed=derive_seed(self.seed, "shadow"),
                noise_seed=noise_seed,
                shadow=shadow,
            )

        if synthetic is None:
            if target is None:
                raise ConfigError("model-agnostic black-box attack needs synthetic samples or a target checkpoint")
            synthetic = ancestral_sample(target, config.synthetic_count, derive_seed(self.seed, "synthetic"))
        feature_map = make_feature_map(
            config.feature_map, query.points.shape[1], config.projection_dim, derive_seed(self.seed, "features")
        )
        return blackbox_agnostic_scores(synthetic, query, feature_map)

    def evaluate(self, config: AttackConfig, scores: MembershipScores, labels: np.ndarray, **metadata) -> AttackOutcome:
        """生成评估报告."""
        report, roc = build_report(scores, labels, self.fpr_targets, self.seed, **metadata)
        logger.info(
            f"{config.scenario.value} attack: AUC={report.auc:.4f}, "
            f"accuracy={report.accuracy:.4f}, F1={report.f1:.4f}"
        )
        return AttackOutcome(config=config, scores=scores, report=report, roc=roc)

    def run(self, config: AttackConfig, query: QuerySet, **sources) -> AttackOutcome:
        """计算分数并评估，``sources`` 同 ``compute_scores``."""
        metadata = sources.pop("metadata", {})
        scores = self.compute_scores(config, query, **sources)
        return self.evaluate(config, scores, query.labels, **metadata)
