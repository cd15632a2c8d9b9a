"""白盒攻击：精确逐步损失 + 截断 + 统计函数."""

from typing import Optional

import numpy as np

from src.attacks.base import BaseAttack, MembershipScores, score_trajectories, truncation_step
from src.config import AttackConfig
from src.data.datasets import QuerySet
from src.diffusion.model import DiffusionModel, LossTrajectory, exact_trajectory
from src.enums import AttackScenario


class WhiteBoxAttack(BaseAttack):
    """直接读取模型参数，计算每个查询样本的精确损失轨迹."""

    def __init__(
        self,
        model: DiffusionModel,
        config: AttackConfig,
        noise_seed: int = 0,
        max_workers: Optional[int] = None,
    ):
        """初始化白盒攻击.

        Args:
            model: 目标模型
            config: 攻击配置
            noise_seed: 前向加噪的种子
            max_workers: 并行线程数
        """
        super().__init__(config, max_workers)
        self.model = model
        self.noise_seed = noise_seed

    @property
    def scenario(self) -> AttackScenario:
        return AttackScenario.WHITE_BOX

    @property
    def T_trun(self) -> int:
        """截断步."""
        return truncation_step(self.config.resolved_truncation_fraction, self.model.T)

    def trajectory(self, sample_id: int, x0: np.ndarray) -> LossTrajectory:
        """单个样本的完整精确轨迹."""
        return exact_trajectory(self.model, x0, self.noise_seed, self.config.noise_draws, sample_id)

    def score_sample(self, sample_id: int, x0: np.ndarray) -> float:
        scores = score_trajectories([self.trajectory(sample_id, x0)], self.statistic, self.scenario, self.T_trun)
        return float(scores.scores[0])


def whitebox_scores(
    model: DiffusionModel,
    query_set: QuerySet,
    config: AttackConfig,
    noise_seed: int = 0,
    max_workers: Optional[int] = None,
) -> MembershipScores:
    """白盒成员分数：f(截断后的精确轨迹)，默认 f = Max、截断比例 0.75."""
    return WhiteBoxAttack(model, config, noise_seed, max_workers).score(query_set)
