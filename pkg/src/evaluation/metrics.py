"""评估指标：ROC 曲线、AUC、低 FPR 下的 TPR、中位数阈值下的准确率与 F1."""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn import metrics

from src.attacks.base import MembershipScores, decide, median_threshold
from src.exceptions import InvalidArgumentError

ScoreLike = Union[MembershipScores, Sequence[float], np.ndarray]


def _as_scores(scores: ScoreLike) -> np.ndarray:
    values = scores.scores if isinstance(scores, MembershipScores) else np.asarray(scores, dtype=np.float64)
    return np.asarray(values, dtype=np.float64)


def _as_labels(labels: Sequence[int], n: int) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.shape != (n,):
        raise InvalidArgumentError(f"expected {n} labels, got shape {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise InvalidArgumentError("labels must be 0/1 membership bits")
    return arr.astype(np.int64)


@dataclass(frozen=True)
class RocCurve:
    """ROC 曲线：按 FPR 排序的工作点，第 k 个点对应规则 score ≤ thresholds[k]."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    @property
    def points(self) -> List[Tuple[float, float]]:
        """(fpr, tpr) 列表."""
        return [(float(f), float(t)) for f, t in zip(self.fpr, self.tpr)]

    def to_frame(self) -> pd.DataFrame:
        """转换为 (fpr, tpr, threshold) 表，按 fpr 排序."""
        return pd.DataFrame({"fpr": self.fpr, "tpr": self.tpr, "threshold": self.thresholds})


def roc_curve(scores: ScoreLike, labels: Sequence[int]) -> RocCurve:
    """计算 ROC 曲线（分数越低越像成员）.

    阈值扫过全部不同的分数值，相同分数的样本同时翻转。sklearn 按"分数越高越阳性"
    计算，这里把分数取反后交给它，再把阈值翻回原刻度。

    Args:
        scores: 成员分数
        labels: 成员标签（1 = 成员）

    Returns:
        RocCurve: 包含 (0, 0) 与 (1, 1) 的曲线
    """
    values = _as_scores(scores)
    y = _as_labels(labels, values.shape[0])
    if not np.all(np.isfinite(values)):
        raise InvalidArgumentError("scores must be finite")
    positives = int(y.sum())
    if positives == 0 or positives == y.size:
        raise InvalidArgumentError("ROC needs both members and non-members")

    fpr, tpr, flipped = metrics.roc_curve(y, -values, drop_intermediate=False)
    thresholds = -np.asarray(flipped, dtype=np.float64)
    # 第一个点 (0, 0) 对应"无人判为成员"
    thresholds[0] = -np.inf
    return RocCurve(
        fpr=np.asarray(fpr, dtype=np.float64),
        tpr=np.asarray(tpr, dtype=np.float64),
        thresholds=thresholds,
        auc=float(metrics.auc(fpr, tpr)),
    )


def tpr_at_fpr(curve: RocCurve, fpr_target: float) -> float:
    """FPR 不超过目标值的工作点中最大的 TPR（阶梯函数，不插值）."""
    if not 0 <= fpr_target <= 1:
        raise InvalidArgumentError(f"fpr_target must lie in [0, 1], got {fpr_target}")
    eligible = curve.tpr[curve.fpr <= fpr_target]
    return float(eligible.max()) if eligible.size else 0.0


def accuracy_f1_at_median(scores: ScoreLike, labels: Sequence[int]) -> Tuple[float, float]:
    """以分数中位数为阈值（严格小于判为成员）的准确率与 F1."""
    values = _as_scores(scores)
    y = _as_labels(labels, values.shape[0])
    predicted = decide(values, median_threshold(values))
    accuracy = metrics.accuracy_score(y, predicted)
    f1 = metrics.f1_score(y, predicted, zero_division=0)
    return float(accuracy), float(f1)


def tpr_column(fpr_target: float) -> str:
    """报告中 TPR@FPR 列名，例如 ``tpr@0.1%fpr``."""
    return f"tpr@{fpr_target * 100:g}%fpr"


@dataclass
class AttackReport:
    """单次攻击的评估结果."""

    scenario: str
    statistic: Optional[str]
    truncation_fraction: Optional[float]
    auc: float
    tpr_at: Dict[float, float]
    accuracy: float
    f1: float
    seed: int = 0
    n_queries: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        rates = [self.auc, self.accuracy, self.f1, *self.tpr_at.values()]
        if any(not 0 <= r <= 1 for r in rates):
            raise InvalidArgumentError(f"report rates must lie in [0, 1]: {rates}")

    def to_record(self) -> Dict[str, Any]:
        """展开为扁平键值记录."""
        record: Dict[str, Any] = {
            "scenario": self.scenario,
            "statistic": self.statistic or "",
            "truncation_fraction": self.truncation_fraction,
            "auc": self.auc,
        }
        for target, value in sorted(self.tpr_at.items()):
            record[tpr_column(target)] = value
        record.update(
            {"accuracy": self.accuracy, "f1": self.f1, "seed": self.seed, "n_queries": self.n_queries}
        )
        record.update(self.metadata)
        return record


def build_report(
    scores: MembershipScores,
    labels: Sequence[int],
    fpr_targets: Sequence[float] = (0.001, 0.01),
    seed: int = 0,
    **metadata: Any,
) -> Tuple[AttackReport, RocCurve]:
    """由分数与真值标签生成评估报告与 ROC 曲线."""
    curve = roc_curve(scores, labels)
    accuracy, f1 = accuracy_f1_at_median(scores, labels)
    report = AttackReport(
        scenario=scores.scenario.value,
        statistic=scores.statistic.value if scores.statistic else None,
        truncation_fraction=scores.truncation_fraction,
        auc=curve.auc,
        tpr_at={float(t): tpr_at_fpr(curve, t) for t in fpr_targets},
        accuracy=accuracy,
        f1=f1,
        seed=seed,
        n_queries=len(scores),
        metadata={**scores.extra, **metadata},
    )
    return report, curve
