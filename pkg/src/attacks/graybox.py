"""灰盒攻击：只通过重建接口估计损失轨迹."""

from typing import Optional

import numpy as np
from loguru import logger

from src.attacks.base import BaseAttack, MembershipScores, apply_statistic, graybox_visible_steps
from src.config import AttackConfig
from src.data.datasets import QuerySet
from src.diffusion.model import DiffusionModel, LossTrajectory, Reconstructor, estimated_trajectory
from src.diffusion.schedule import NoiseSchedule, build_schedule, other_schedule_kind
from src.enums import AttackScenario, ScheduleKind
from src.exceptions import InvalidArgumentError


class GrayBoxAttack(BaseAttack):
    """攻击者只能调用 ``reconstruct(x_t, t)``，用猜测的调度自行加噪."""

    def __init__(
        self,
        reconstructor: Reconstructor,
        guessed_schedule: NoiseSchedule,
        config: AttackConfig,
        noise_seed: int = 0,
        max_workers: Optional[int] = None,
    ):
        """初始化灰盒攻击.

        Args:
            reconstructor: 模型的重建门面
            guessed_schedule: 攻击者使用的噪声调度
            config: 攻击配置
            noise_seed: 前向加噪的种子
            max_workers: 并行线程数
        """
        super().__init__(config, max_workers)
        if guessed_schedule.steps != reconstructor.T:
            raise InvalidArgumentError(
                f"guessed schedule has T={guessed_schedule.steps}, model has T={reconstructor.T}"
            )
        self.reconstructor = reconstructor
        self.guessed_schedule = guessed_schedule
        self.noise_seed = noise_seed
        self.visible_steps = graybox_visible_steps(reconstructor.T, config)

    @property
    def scenario(self) -> AttackScenario:
        return AttackScenario.GRAY_BOX

    def trajectory(self, sample_id: int, x0: np.ndarray) -> LossTrajectory:
        """可见步上的估计轨迹."""
        return estimated_trajectory(
            self.reconstructor, x0, self.guessed_schedule, self.visible_steps, self.noise_seed, sample_id
        )

    def score_sample(self, sample_id: int, x0: np.ndarray) -> float:
        return apply_statistic(self.trajectory(sample_id, x0).as_array(), self.statistic)


def guessed_kind(model: DiffusionModel, config: AttackConfig) -> ScheduleKind:
    """攻击者使用的调度类型：默认猜中，``mismatched_scheduler`` 时取另一种."""
    if config.mismatched_scheduler:
        return other_schedule_kind(model.schedule.kind)
    return config.scheduler_guess or model.schedule.kind


def guessed_schedule_for(model: DiffusionModel, config: AttackConfig) -> NoiseSchedule:
    """攻击者使用的调度，与真实调度同类型时直接复用."""
    kind = guessed_kind(model, config)
    if kind is model.schedule.kind:
        return model.schedule
    logger.debug(
        f"Gray-box attacker guesses a {kind.value} schedule for a {model.schedule.kind.value} model"
    )
    return build_schedule(kind, model.T)


def graybox_scores(
    model: DiffusionModel,
    query_set: QuerySet,
    config: AttackConfig,
    noise_seed: int = 0,
    max_workers: Optional[int] = None,
) -> MembershipScores:
    """灰盒成员分数，攻击本身只拿到模型的重建门面."""
    attack = GrayBoxAttack(
        model.as_reconstructor(), guessed_schedule_for(model, config), config, noise_seed, max_workers
    )
    return attack.score(query_set)
