"""轨迹分析：成员 / 非成员的逐步损失剖面与最优统计函数."""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from src.attacks.base import score_trajectories
from src.diffusion.model import LossTrajectory
from src.enums import AttackScenario, Statistic
from src.evaluation.metrics import roc_curve
from src.exceptions import InvalidArgumentError


def trajectory_profile(trajectories: Sequence[LossTrajectory], labels: Sequence[int]) -> pd.DataFrame:
    """逐时间步统计成员与非成员损失的中位数和均值.

    Returns:
        pd.DataFrame: 列 (t, group, median, mean, count)，group 为 member / nonmember
    """
    if len(trajectories) != len(labels):
        raise InvalidArgumentError(f"{len(trajectories)} trajectories but {len(labels)} labels")
    rows = []
    for traj, label in zip(trajectories, labels):
        group = "member" if int(label) == 1 else "nonmember"
        rows.extend({"t": t, "group": group, "value": v} for t, v in traj.values.items())
    frame = pd.DataFrame(rows, columns=["t", "group", "value"])
    profile = (
        frame.groupby(["t", "group"])["value"]
        .agg(["median", "mean", "count"])
        .reset_index()
        .sort_values(["t", "group"], kind="mergesort")
        .reset_index(drop=True)
    )
    return profile


@dataclass(frozen=True)
class StatisticSearch:
    """四种统计函数的 AUC 以及其中的最优者."""

    aucs: Dict[Statistic, float]
    T_trun: Optional[int]

    @property
    def best_statistic(self) -> Statistic:
        """AUC 最高的统计函数（并列时取枚举顺序靠前者）."""
        return max(self.aucs, key=lambda s: (self.aucs[s], -list(Statistic).index(s)))

    @property
    def best_auc(self) -> float:
        """最高 AUC."""
        return self.aucs[self.best_statistic]


def best_over_statistics(
    trajectories: Sequence[LossTrajectory],
    labels: Sequence[int],
    T_trun: Optional[int] = None,
    scenario: AttackScenario = AttackScenario.WHITE_BOX,
) -> StatisticSearch:
    """对 Sum / Median / Min / Max 逐一评估 AUC.

    Args:
        trajectories: 查询集的损失轨迹
        labels: 成员标签
        T_trun: 截断步，None 表示不截断（即截断表中的参考列）
        scenario: 写入分数的场景

    Returns:
        StatisticSearch: 各统计函数的 AUC
    """
    labels_arr = np.asarray(labels)
    aucs = {}
    for statistic in Statistic:
        scores = score_trajectories(trajectories, statistic, scenario, T_trun)
        aucs[statistic] = roc_curve(scores, labels_arr).auc
    return StatisticSearch(aucs=aucs, T_trun=T_trun)
