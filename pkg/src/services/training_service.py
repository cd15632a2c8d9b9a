"""训练服务：目标模型与影子模型的去噪网络训练."""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from src.config import TrainConfig, get_settings
from src.diffusion.model import DiffusionModel, Sampler, forward_sample
from src.diffusion.network import AdamState, DenseNet, adam_step
from src.diffusion.schedule import build_schedule
from src.enums import Parameterization
from src.exceptions import InvalidArgumentError, TrainingDivergedError
from src.utils.seeding import make_rng


@dataclass
class TrainingResult:
    """训练结果：冻结的模型与逐步损失日志."""

    model: DiffusionModel
    loss_log: List[Tuple[int, float]] = field(default_factory=list)

    @property
    def initial_loss(self) -> Optional[float]:
        """第一步的损失."""
        return self.loss_log[0][1] if self.loss_log else None

    @property
    def final_loss(self) -> Optional[float]:
        """最后一步的损失."""
        return self.loss_log[-1][1] if self.loss_log else None

    def loss_frame(self) -> pd.DataFrame:
        """损失日志表 (step, loss)."""
        return pd.DataFrame(self.loss_log, columns=["step", "loss"])


class TrainingService:
    """训练服务类."""

    def __init__(self):
        """初始化训练服务."""
        self.settings = get_settings()

    def _check_finite(self, net: DenseNet, step: int, loss: float) -> None:
        for name, p in net.named_parameters().items():
            if not np.all(np.isfinite(p)):
                raise TrainingDivergedError("non-finite parameters", {"step": step, "loss": loss, "parameter": name})

    def train_model(self, points: np.ndarray, config: TrainConfig, seed: int = 0) -> TrainingResult:
        """用简化目标 E‖target - net(x_t, t)‖² 训练去噪网络.

        每一步随机抽取一个批次，对每个样本独立抽取 t ~ U[1, T] 与噪声。
        相同的数据、配置与种子得到逐位相同的参数。

        Args:
            points: 已标准化的成员样本，形状 (n, d)
            config: 训练配置
            seed: 种子，``config.seed`` 非空时以其为准

        Returns:
            TrainingResult: 冻结的模型与损失日志
        """
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] == 0:
            raise InvalidArgumentError(f"training set must be a non-empty (n, d) array, got {points.shape}")
        n, dim = points.shape
        batch_size = min(config.batch_size, n)
        if batch_size < config.batch_size:
            logger.warning(f"batch_size {config.batch_size} exceeds training-set size {n}, using full batches of {n}")
        seed = config.seed if config.seed is not None else seed

        schedule = build_schedule(config.schedule_kind, config.T)
        net = DenseNet.initialize(
            dim, config.hidden_dims, config.time_embed_dim, config.activation, seed=seed
        )
        state = AdamState.for_net(net, config.learning_rate)
        rng = make_rng(seed, "batches")
        predict_noise = config.parameterization is Parameterization.EPSILON
        loss_log: List[Tuple[int, float]] = []

        logger.info(
            f"Training {config.parameterization.value} model: n={n}, dim={dim}, T={config.T}, "
            f"steps={config.steps}, batch={batch_size}"
        )
        for step in range(1, config.steps + 1):
            batch = points[rng.choice(n, size=batch_size, replace=False)]
            t = rng.integers(1, config.T + 1, size=batch_size)
            eps = rng.standard_normal(batch.shape)
            x_t = forward_sample(schedule, batch, t, eps)

            output, pullback = net.vjp(x_t, t, config.T)
            diff = output.astype(np.float64) - (eps if predict_noise else batch)
            loss = float(np.mean(np.sum(diff * diff, axis=1)))
            if not np.isfinite(loss):
                raise TrainingDivergedError("non-finite training loss", {"step": step, "loss": loss})
            net, state = adam_step(state, net, pullback(2.0 * diff / batch_size))
            loss_log.append((step, loss))

            if step % config.log_every == 0 or step == config.steps:
                self._check_finite(net, step, loss)
                logger.debug(f"Step {step}/{config.steps}: loss={loss:.6f}")

        model = DiffusionModel(net.freeze(), schedule, config.parameterization, config.clamp)
        if loss_log:
            logger.info(f"Training finished: loss {loss_log[0][1]:.4f} -> {loss_log[-1][1]:.4f}")
        return TrainingResult(model=model, loss_log=loss_log)

    def train_shadow(
        self, target: Sampler, synthetic_count: int, config: TrainConfig, seed: int = 0
    ) -> TrainingResult:
        """用目标模型的 K 个生成样本训练影子模型.

        Args:
            target: 只暴露 ``sample`` 的目标模型
            synthetic_count: 生成样本数 K
            config: 影子模型训练配置（结构与 T 可与目标不同）
            seed: 采样与训练的种子

        Returns:
            TrainingResult: 影子模型训练结果
        """
        if isinstance(synthetic_count, bool) or int(synthetic_count) != synthetic_count or synthetic_count < 1:
            raise InvalidArgumentError(f"synthetic_count must be a positive integer, got {synthetic_count}")
        if synthetic_count < config.batch_size:
            raise InvalidArgumentError(
                f"synthetic_count {synthetic_count} is below the shadow batch size {config.batch_size}"
            )
        samples = target.sample(int(synthetic_count), seed)
        logger.info(f"Drew {len(samples)} synthetic samples for the shadow model")
        return self.train_model(samples, config, seed)


def train_model(points: np.ndarray, config: TrainConfig, seed: int = 0) -> TrainingResult:
    """训练目标模型，见 ``TrainingService.train_model``."""
    return TrainingService().train_model(points, config, seed)


def train_shadow(target: Sampler, synthetic_count: int, config: TrainConfig, seed: int = 0) -> TrainingResult:
    """训练影子模型，见 ``TrainingService.train_shadow``."""
    return TrainingService().train_shadow(target, synthetic_count, config, seed)
