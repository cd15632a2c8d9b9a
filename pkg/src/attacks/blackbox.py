"""黑盒攻击：影子模型攻击与基于最近邻的模型无关攻击."""

from abc import ABC, abstractmethod
from dataclasses import replace
from typing import Optional

import numpy as np
from loguru import logger

from src.attacks.base import MembershipScores
from src.attacks.graybox import graybox_scores
from src.attacks.whitebox import whitebox_scores
from src.config import AttackConfig, TrainConfig
from src.data.datasets import QuerySet
from src.diffusion.model import DiffusionModel, Sampler
from src.enums import AttackScenario, FeatureMapKind
from src.exceptions import InvalidArgumentError
from src.utils.seeding import make_rng


class FeatureMap(ABC):
    """把数据向量映射到特征空间."""

    @abstractmethod
    def __call__(self, points: np.ndarray) -> np.ndarray:
        """返回形状 (n, d') 的特征."""
        pass


class IdentityFeatureMap(FeatureMap):
    """直接使用标准化后的原始向量."""

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(points, dtype=np.float64))


class RandomProjectionFeatureMap(FeatureMap):
    """固定种子的高斯随机投影 d → d'."""

    def __init__(self, input_dim: int, output_dim: int, seed: int = 0):
        if input_dim < 1 or output_dim < 1:
            raise InvalidArgumentError(f"projection dims must be positive, got {input_dim} -> {output_dim}")
        rng = make_rng(seed, "random-projection")
        self.matrix = rng.standard_normal((input_dim, output_dim)) / np.sqrt(output_dim)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if points.shape[1] != self.matrix.shape[0]:
            raise InvalidArgumentError(f"expected {self.matrix.shape[0]} features, got {points.shape[1]}")
        return points @ self.matrix


def make_feature_map(
    kind: FeatureMapKind, input_dim: int, projection_dim: Optional[int] = None, seed: int = 0
) -> FeatureMap:
    """按类型创建特征映射，随机投影默认保持维度不变."""
    if FeatureMapKind(kind) is FeatureMapKind.RANDOM_PROJECTION:
        return RandomProjectionFeatureMap(input_dim, projection_dim or input_dim, seed)
    return IdentityFeatureMap()


def cosine_distances(queries: np.ndarray, references: np.ndarray) -> np.ndarray:
    """两两余弦距离 1 - ⟨u, v⟩ / (‖u‖‖v‖)，任一向量为零时距离记为 1.

    Returns:
        np.ndarray: 形状 (n_queries, n_references)，取值 [0, 2]
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    references = np.atleast_2d(np.asarray(references, dtype=np.float64))
    q_norm = np.linalg.norm(queries, axis=1)
    r_norm = np.linalg.norm(references, axis=1)
    q_unit = queries / np.where(q_norm > 0, q_norm, 1.0)[:, None]
    r_unit = references / np.where(r_norm > 0, r_norm, 1.0)[:, None]
    distances = 1.0 - np.clip(q_unit @ r_unit.T, -1.0, 1.0)
    zero = (q_norm == 0)[:, None] | (r_norm == 0)[None, :]
    return np.where(zero, 1.0, distances)


class ModelAgnosticAttack:
    """分数 = 查询样本到任一生成样本的最小特征空间余弦距离."""

    scenario = AttackScenario.BLACK_BOX_AGNOSTIC

    def __init__(self, synthetic: np.ndarray, feature_map: Optional[FeatureMap] = None):
        """初始化攻击.

        Args:
            synthetic: K 个生成样本
            feature_map: 特征映射，默认恒等映射
        """
        synthetic = np.asarray(synthetic, dtype=np.float64)
        if synthetic.ndim != 2 or synthetic.shape[0] == 0:
            raise InvalidArgumentError(f"synthetic set must be a non-empty (K, d) array, got {synthetic.shape}")
        self.feature_map = feature_map or IdentityFeatureMap()
        self.synthetic_features = self.feature_map(synthetic)

    def score(self, query: QuerySet) -> MembershipScores:
        """对查询集打分."""
        features = self.feature_map(query.points)
        nearest = cosine_distances(features, self.synthetic_features).min(axis=1)
        return MembershipScores(
            sample_ids=np.asarray(query.sample_ids, dtype=np.int64),
            scores=nearest,
            scenario=self.scenario,
        )


def blackbox_agnostic_scores(
    synthetic_set: np.ndarray, query_set: QuerySet, feature_map: Optional[FeatureMap] = None
) -> MembershipScores:
    """模型无关黑盒分数."""
    return ModelAgnosticAttack(synthetic_set, feature_map).score(query_set)


class ModelSpecificAttack:
    """用目标模型的生成样本训练影子模型，再对影子模型做白盒或灰盒攻击."""

    scenario = AttackScenario.BLACK_BOX_SPECIFIC

    def __init__(
        self,
        shadow_config: TrainConfig,
        attack_config: AttackConfig,
        seed: int = 0,
        noise_seed: int = 0,
        max_workers: Optional[int] = None,
    ):
        """初始化攻击.

        Args:
            shadow_config: 影子模型训练配置（结构与 T 可与目标模型不同）
            attack_config: 攻击配置，``shadow_attack`` 选择攻击影子模型的方式
            seed: 生成样本与影子训练的种子
            noise_seed: 攻击加噪种子
            max_workers: 并行线程数
        """
        self.shadow_config = shadow_config
        self.attack_config = attack_config
        self.seed = seed
        self.noise_seed = noise_seed
        self.max_workers = max_workers
        self.shadow: Optional[DiffusionModel] = None

    def fit(self, target: Sampler) -> DiffusionModel:
        """只通过 ``sample`` 接口获取 K 个样本并训练影子模型."""
        from src.services.training_service import train_shadow

        logger.info(f"Training shadow model on {self.attack_config.synthetic_count} target samples")
        result = train_shadow(target, self.attack_config.synthetic_count, self.shadow_config, self.seed)
        self.shadow = result.model
        return self.shadow

    def score_with(self, shadow: DiffusionModel, query: QuerySet) -> MembershipScores:
        """在给定影子模型上打分."""
        if self.attack_config.shadow_attack is AttackScenario.WHITE_BOX:
            inner = whitebox_scores(shadow, query, self.attack_config, self.noise_seed, self.max_workers)
        else:
            inner = graybox_scores(shadow, query, self.attack_config, self.noise_seed, self.max_workers)
        return replace(inner, scenario=self.scenario, extra={"shadow_attack": self.attack_config.shadow_attack.value})

    def score(self, query: QuerySet) -> MembershipScores:
        """使用已训练的影子模型打分."""
        if self.shadow is None:
            raise InvalidArgumentError("shadow model has not been trained; call fit() first")
        return self.score_with(self.shadow, query)


def blackbox_specific_scores(
    target: Sampler,
    query_set: QuerySet,
    shadow_config: TrainConfig,
    attack_config: AttackConfig,
    seed: int = 0,
    noise_seed: int = 0,
    shadow: Optional[DiffusionModel] = None,
    max_workers: Optional[int] = None,
) -> MembershipScores:
    """模型特定黑盒分数.

    Args:
        target: 只暴露 ``sample`` 的目标模型
        query_set: 查询集
        shadow_config: 影子模型训练配置
        attack_config: 攻击配置
        seed: 采样与训练种子
        noise_seed: 攻击加噪种子
        shadow: 已有的影子模型，给出时跳过训练
        max_workers: 并行线程数

    Returns:
        MembershipScores: 成员分数
    """
    attack = ModelSpecificAttack(shadow_config, attack_config, seed, noise_seed, max_workers)
    model = shadow if shadow is not None else attack.fit(target)
    return attack.score_with(model, query_set)
