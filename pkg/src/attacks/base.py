"""攻击基类与共用的轨迹处理：截断、步抑制、统计函数与阈值判定."""

import math
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger

from src.config import AttackConfig, get_settings
from src.data.datasets import QuerySet
from src.diffusion.model import LossTrajectory
from src.enums import AttackScenario, Statistic
from src.exceptions import EmptyTrajectoryError, InvalidArgumentError


@dataclass(frozen=True)
class MembershipScores:
    """逐样本成员分数，约定分数越低越可能是成员."""

    sample_ids: np.ndarray
    scores: np.ndarray
    scenario: AttackScenario
    statistic: Optional[Statistic] = None
    truncation_fraction: Optional[float] = None
    extra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        ids = np.asarray(self.sample_ids, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=np.float64)
        if ids.shape != scores.shape or scores.ndim != 1:
            raise InvalidArgumentError(f"ids {ids.shape} and scores {scores.shape} must be matching 1-D arrays")
        if not np.all(np.isfinite(scores)):
            raise InvalidArgumentError("membership scores must be finite")
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return len(self.scores)

    def to_frame(self, labels: Optional[Sequence[int]] = None) -> pd.DataFrame:
        """转换为分数表 (sample_id, score, is_member, scenario, statistic, truncation_fraction)."""
        return pd.DataFrame(
            {
                "sample_id": self.sample_ids,
                "score": self.scores,
                "is_member": np.asarray(labels, dtype=np.int64) if labels is not None else -1,
                "scenario": self.scenario.value,
                "statistic": self.statistic.value if self.statistic else "",
                "truncation_fraction": self.truncation_fraction,
            }
        )


def truncation_step(fraction: float, T: int) -> int:
    """T_trun = round(fraction·T)，0.5 向上取整."""
    if not 0 < fraction <= 1:
        raise InvalidArgumentError(f"truncation fraction must lie in (0, 1], got {fraction}")
    return int(math.floor(fraction * T + 0.5))


def truncate_trajectory(traj: LossTrajectory, T_trun: int) -> LossTrajectory:
    """只保留 t ≤ T_trun 的项（与已有掩码取交集）.

    Raises:
        EmptyTrajectoryError: 截断后没有剩余项
    """
    if isinstance(T_trun, bool) or int(T_trun) != T_trun or T_trun < 0:
        raise InvalidArgumentError(f"T_trun must be a non-negative integer, got {T_trun}")
    truncated = traj.restricted(range(0, int(T_trun) + 1))
    if not truncated.values:
        raise EmptyTrajectoryError(f"no trajectory entries left for sample {traj.sample_id} at T_trun={T_trun}")
    return truncated


def suppression_mask(steps: Sequence[int], keep: float) -> List[int]:
    """在给定步集合上均匀保留 ⌈keep·(n+1)⌉ 步（首尾均保留，最多 n 步）.

    反向链的这一段有 x_0..x_n 共 n+1 个中间输出，保留比例按输出个数折算；
    x_0 不进入估计轨迹，所以再截到 n 步。

    Args:
        steps: 升序排列的可见步
        keep: 保留比例，(0, 1]

    Returns:
        List[int]: 保留下来的步
    """
    if not 0 < keep <= 1:
        raise InvalidArgumentError(f"suppression_keep must lie in (0, 1], got {keep}")
    steps = list(steps)
    if not steps:
        raise EmptyTrajectoryError("no steps to subsample")
    count = min(len(steps), math.ceil(round(keep * (len(steps) + 1), 9)))
    if count == len(steps):
        return steps
    positions = np.floor(np.linspace(0, len(steps) - 1, count) + 0.5).astype(np.int64)
    return [steps[i] for i in positions]


def graybox_visible_steps(T: int, config: AttackConfig) -> List[int]:
    """灰盒攻击可见的时间步：在 [1, T] 上按配置顺序做截断与步抑制."""
    t_trun = truncation_step(config.resolved_truncation_fraction, T)
    steps = list(range(1, T + 1))
    keep = config.suppression_keep
    if keep is not None and config.suppress_before_truncation:
        steps = suppression_mask(steps, keep)
    steps = [t for t in steps if t <= t_trun]
    if not steps:
        raise EmptyTrajectoryError(f"truncation at T_trun={t_trun} leaves no gray-box steps")
    if keep is not None and not config.suppress_before_truncation:
        steps = suppression_mask(steps, keep)
    return steps


def apply_statistic(values: Sequence[float], statistic: Union[Statistic, str]) -> float:
    """把损失轨迹归约为一个分数.

    Median 在偶数长度时取中间两个数的平均值；Sum 按时间步顺序逐项累加。
    """
    statistic = Statistic(statistic)
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise InvalidArgumentError("statistic of an empty sequence is undefined")
    if statistic is Statistic.SUM:
        total = 0.0
        for v in arr:
            total += float(v)
        return total
    if statistic is Statistic.MEDIAN:
        return float(np.median(arr))
    if statistic is Statistic.MIN:
        return float(arr.min())
    return float(arr.max())


def score_trajectories(
    trajectories: Sequence[LossTrajectory],
    statistic: Union[Statistic, str],
    scenario: AttackScenario,
    T_trun: Optional[int] = None,
    truncation_fraction: Optional[float] = None,
) -> MembershipScores:
    """对一组轨迹截断（可选）后套用统计函数."""
    scores = []
    for traj in trajectories:
        kept = truncate_trajectory(traj, T_trun) if T_trun is not None else traj
        scores.append(apply_statistic(kept.as_array(), statistic))
    return MembershipScores(
        sample_ids=np.array([traj.sample_id for traj in trajectories], dtype=np.int64),
        scores=np.array(scores, dtype=np.float64),
        scenario=scenario,
        statistic=Statistic(statistic),
        truncation_fraction=truncation_fraction,
    )


def decide(scores: Union[MembershipScores, Sequence[float]], threshold: float) -> np.ndarray:
    """成员判定：score < threshold 记为 1."""
    values = scores.scores if isinstance(scores, MembershipScores) else np.asarray(scores, dtype=np.float64)
    return (values < threshold).astype(np.int64)


def median_threshold(scores: Union[MembershipScores, Sequence[float]]) -> float:
    """查询集分数的中位数，作为与样本无关的阈值."""
    values = scores.scores if isinstance(scores, MembershipScores) else np.asarray(scores, dtype=np.float64)
    if values.size == 0:
        raise InvalidArgumentError("median threshold of an empty score set is undefined")
    return float(np.median(values))


class BaseAttack(ABC):
    """攻击基类：逐样本打分，可在线程池中并行."""

    def __init__(self, config: AttackConfig, max_workers: Optional[int] = None):
        """初始化攻击.

        Args:
            config: 攻击配置
            max_workers: 并行线程数，缺省时取 ``DIFFMIA_THREADS``
        """
        self.config = config
        self.settings = get_settings()
        self.max_workers = max_workers or self.settings.threads

    @property
    @abstractmethod
    def scenario(self) -> AttackScenario:
        """威胁模型."""
        pass

    @property
    def statistic(self) -> Statistic:
        """使用的统计函数."""
        return self.config.resolved_statistic

    @abstractmethod
    def score_sample(self, sample_id: int, x0: np.ndarray) -> float:
        """计算单个查询样本的分数."""
        pass

    def score(self, query: QuerySet) -> MembershipScores:
        """对整个查询集打分，结果顺序与查询集一致.

        Args:
            query: 查询集

        Returns:
            MembershipScores: 成员分数
        """
        jobs = list(zip((int(i) for i in query.sample_ids), query.points))
        if self.max_workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                scores = list(pool.map(lambda job: self.score_sample(*job), jobs))
        else:
            scores = [self.score_sample(i, x) for i, x in jobs]
        logger.debug(f"{self.scenario.value} attack scored {len(scores)} samples")
        return MembershipScores(
            sample_ids=np.asarray(query.sample_ids, dtype=np.int64),
            scores=np.array(scores, dtype=np.float64),
            scenario=self.scenario,
            statistic=self.statistic,
            truncation_fraction=self.config.resolved_truncation_fraction,
        )
