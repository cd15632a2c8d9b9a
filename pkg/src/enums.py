"""枚举类型定义."""

from enum import Enum as PyEnum


class ScheduleKind(str, PyEnum):
    """噪声调度类型."""

    LINEAR = "linear"
    COSINE = "cosine"


class Parameterization(str, PyEnum):
    """去噪网络的预测目标."""

    EPSILON = "epsilon"
    X0 = "x0"


class Activation(str, PyEnum):
    """隐藏层激活函数."""

    SILU = "silu"
    RELU = "relu"


class TrajectoryKind(str, PyEnum):
    """损失轨迹类型：白盒精确值或灰盒估计值."""

    EXACT = "exact"
    ESTIMATED = "estimated"


class Statistic(str, PyEnum):
    """作用在损失轨迹上的统计函数."""

    SUM = "sum"
    MEDIAN = "median"
    MIN = "min"
    MAX = "max"


class AttackScenario(str, PyEnum):
    """威胁模型."""

    WHITE_BOX = "whitebox"
    GRAY_BOX = "graybox"
    BLACK_BOX_SPECIFIC = "blackbox_specific"
    BLACK_BOX_AGNOSTIC = "blackbox_agnostic"


class FeatureMapKind(str, PyEnum):
    """模型无关攻击使用的特征映射."""

    IDENTITY = "identity"
    RANDOM_PROJECTION = "random_projection"


class DatasetKind(str, PyEnum):
    """合成数据集类型."""

    GAUSSIAN_MIXTURE = "gaussian_mixture"
    RINGS = "rings"
