"""实验配置文件：严格模式的 JSON 结构，未知字段视为错误."""

import hashlib
import json
from pathlib import Path
from typing import Any, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.enums import (
    Activation,
    AttackScenario,
    DatasetKind,
    FeatureMapKind,
    Parameterization,
    ScheduleKind,
    Statistic,
)
from src.exceptions import ConfigError

CONFIG_VERSION = 1
# 截断表的默认截断比例
TRUNCATION_FRACTIONS = [1.0, 0.975, 0.875, 0.75, 0.625, 0.5, 0.25]
WHITEBOX_TRUNCATION = 0.75
GRAYBOX_TRUNCATION = 0.25


class StrictModel(BaseModel):
    """禁止未知字段的基类."""

    model_config = ConfigDict(extra="forbid")


class DatasetSpec(StrictModel):
    """合成数据集与成员划分."""

    kind: DatasetKind = DatasetKind.GAUSSIAN_MIXTURE
    n: int = Field(1024, ge=1, description="样本总数")
    dim: int = Field(8, ge=1, description="数据维度")
    components: int = Field(4, ge=1, description="高斯混合成分数")
    separation: float = Field(6.0, gt=0, description="成分均值间距")
    radii: List[float] = Field(default_factory=lambda: [1.0, 2.0], description="环形数据的半径")
    noise: float = Field(0.1, ge=0, description="环形数据的噪声标准差")
    member_count: int = Field(64, ge=1, description="成员（训练集）样本数")
    query_size: int = Field(128, ge=2, description="平衡查询集大小")
    seed: Optional[int] = Field(None, ge=0, description="数据种子，缺省时使用全局种子")

    @field_validator("radii")
    @classmethod
    def validate_radii(cls, v):
        """验证环半径."""
        if not v or any(r <= 0 for r in v):
            raise ValueError("radii must be a non-empty list of positive numbers")
        return v

    @model_validator(mode="after")
    def validate_sizes(self):
        """验证划分规模."""
        if self.query_size % 2:
            raise ValueError(f"query_size must be even, got {self.query_size}")
        half = self.query_size // 2
        if half > self.member_count:
            raise ValueError(f"query_size/2 = {half} exceeds member_count = {self.member_count}")
        if self.member_count + half > self.n:
            raise ValueError(
                f"member_count + query_size/2 = {self.member_count + half} exceeds n = {self.n}"
            )
        if self.kind is DatasetKind.RINGS and self.dim < 2:
            raise ValueError("ring datasets need dim >= 2")
        return self


class TrainConfig(StrictModel):
    """去噪网络训练配置（目标模型与影子模型共用）."""

    steps: int = Field(20000, ge=0, description="优化步数")
    batch_size: int = Field(64, ge=1)
    learning_rate: float = Field(1e-3, gt=0)
    seed: Optional[int] = Field(None, ge=0, description="训练种子，缺省时使用全局种子")
    parameterization: Parameterization = Parameterization.EPSILON
    schedule_kind: ScheduleKind = ScheduleKind.LINEAR
    T: int = Field(100, ge=2, description="扩散步数")
    hidden_dims: List[int] = Field(default_factory=lambda: [128, 128])
    time_embed_dim: int = Field(16, ge=2)
    activation: Activation = Activation.SILU
    clamp: float = Field(3.0, gt=0, description="x0 预测的截断范围")
    log_every: int = Field(500, ge=1, description="训练日志间隔")

    @field_validator("hidden_dims")
    @classmethod
    def validate_hidden_dims(cls, v):
        """验证隐藏层宽度."""
        if any(h <= 0 for h in v):
            raise ValueError(f"hidden widths must be positive, got {v}")
        return v

    @field_validator("time_embed_dim")
    @classmethod
    def validate_time_embed_dim(cls, v):
        """时间嵌入维度必须为偶数."""
        if v % 2:
            raise ValueError(f"time_embed_dim must be even, got {v}")
        return v


class AttackConfig(StrictModel):
    """单次攻击配置."""

    scenario: AttackScenario = AttackScenario.WHITE_BOX
    statistic: Optional[Statistic] = Field(None, description="缺省时白盒用 Max，其余用 Median")
    truncation_fraction: Optional[float] = Field(
        None, gt=0, le=1, description="缺省时白盒用 0.75，灰盒用 0.25"
    )
    suppression_keep: Optional[float] = Field(None, gt=0, le=1, description="灰盒可见步数比例")
    suppress_before_truncation: bool = False
    scheduler_guess: Optional[ScheduleKind] = Field(None, description="灰盒攻击者猜测的调度")
    mismatched_scheduler: bool = Field(False, description="灰盒攻击者故意猜另一种调度")
    feature_map: FeatureMapKind = FeatureMapKind.IDENTITY
    projection_dim: Optional[int] = Field(None, ge=1)
    synthetic_count: int = Field(512, ge=1, description="黑盒攻击使用的生成样本数 K")
    noise_draws: int = Field(1, ge=1)
    shadow_attack: AttackScenario = AttackScenario.GRAY_BOX

    @field_validator("shadow_attack")
    @classmethod
    def validate_shadow_attack(cls, v):
        """影子模型只能用白盒或灰盒方式攻击."""
        if v not in (AttackScenario.WHITE_BOX, AttackScenario.GRAY_BOX):
            raise ValueError(f"shadow_attack must be whitebox or graybox, got {v.value}")
        return v

    @model_validator(mode="after")
    def validate_guess(self):
        """显式猜测与故意猜错不能同时给出."""
        if self.mismatched_scheduler and self.scheduler_guess is not None:
            raise ValueError("scheduler_guess and mismatched_scheduler are mutually exclusive")
        return self

    @property
    def uses_exact_loss(self) -> bool:
        """是否对精确损失轨迹打分（白盒，或用白盒方式攻击影子模型）."""
        if self.scenario is AttackScenario.WHITE_BOX:
            return True
        return (
            self.scenario is AttackScenario.BLACK_BOX_SPECIFIC
            and self.shadow_attack is AttackScenario.WHITE_BOX
        )

    @property
    def resolved_statistic(self) -> Statistic:
        """实际使用的统计函数."""
        if self.statistic is not None:
            return self.statistic
        return Statistic.MAX if self.uses_exact_loss else Statistic.MEDIAN

    @property
    def resolved_truncation_fraction(self) -> float:
        """实际使用的截断比例.

        估计轨迹在 x̂0 被截断到 [-C, C] 的高噪声步上只剩噪声，灰盒缺省只保留
        线性调度 T = 100 时信噪比不低于 1 的前四分之一步。
        """
        if self.truncation_fraction is not None:
            return self.truncation_fraction
        return WHITEBOX_TRUNCATION if self.uses_exact_loss else GRAYBOX_TRUNCATION

    @property
    def label(self) -> str:
        """用于输出文件名的短标签，非默认的攻击参数都会出现在标签里."""
        parts = [
            self.scenario.value,
            self.resolved_statistic.value,
            f"{self.resolved_truncation_fraction:g}",
        ]
        if self.scheduler_guess is not None:
            parts.append(f"guess-{self.scheduler_guess.value}")
        if self.mismatched_scheduler:
            parts.append("mismatched")
        if self.suppression_keep is not None:
            order = "-first" if self.suppress_before_truncation else ""
            parts.append(f"keep{self.suppression_keep:g}{order}")
        agnostic = self.scenario is AttackScenario.BLACK_BOX_AGNOSTIC
        if agnostic and self.feature_map is not FeatureMapKind.IDENTITY:
            parts.append(f"{self.feature_map.value}{self.projection_dim or ''}")
        if self.scenario in (AttackScenario.BLACK_BOX_AGNOSTIC, AttackScenario.BLACK_BOX_SPECIFIC):
            parts.append(f"k{self.synthetic_count}")
        if self.scenario is AttackScenario.BLACK_BOX_SPECIFIC:
            parts.append(f"on-{self.shadow_attack.value}")
        if self.noise_draws != 1:
            parts.append(f"draws{self.noise_draws}")
        return "_".join(parts)


class SweepSpec(StrictModel):
    """扫描轴，未给出的轴取基础配置的值."""

    statistic: Optional[List[Statistic]] = None
    truncation_fraction: Optional[List[float]] = None
    member_count: Optional[List[int]] = None
    scenario: Optional[List[AttackScenario]] = None
    suppression_keep: Optional[List[Optional[float]]] = None
    scheduler_guess: Optional[List[Optional[ScheduleKind]]] = None
    mismatched_scheduler: Optional[List[bool]] = None
    seed: Optional[List[int]] = None

    @model_validator(mode="after")
    def validate_axes(self):
        """验证轴取值."""
        for name in type(self).model_fields:
            values = getattr(self, name)
            if values is not None and not values:
                raise ValueError(f"sweep axis '{name}' must not be empty")
        for fraction in self.truncation_fraction or []:
            if not 0 < fraction <= 1:
                raise ValueError(f"truncation_fraction must lie in (0, 1], got {fraction}")
        for keep in self.suppression_keep or []:
            if keep is not None and not 0 < keep <= 1:
                raise ValueError(f"suppression_keep must lie in (0, 1], got {keep}")
        for count in self.member_count or []:
            if count < 1:
                raise ValueError(f"member_count must be positive, got {count}")
        for seed in self.seed or []:
            if seed < 0:
                raise ValueError(f"seed must be non-negative, got {seed}")
        return self

    @classmethod
    def truncation_table(cls, base: Optional["SweepSpec"] = None) -> "SweepSpec":
        """全部统计函数 × 默认截断比例的截断表扫描，其余轴沿用 ``base``."""
        axes = base.model_dump() if base is not None else {}
        axes.update({"statistic": list(Statistic), "truncation_fraction": list(TRUNCATION_FRACTIONS)})
        return cls.model_validate(axes)


class ArtifactPaths(StrictModel):
    """显式指定的已有产物路径."""

    checkpoint: Optional[str] = None
    synthetic_samples: Optional[str] = None
    shadow_checkpoint: Optional[str] = None


def _default_attacks() -> List[AttackConfig]:
    return [AttackConfig(scenario=AttackScenario.WHITE_BOX), AttackConfig(scenario=AttackScenario.GRAY_BOX)]


class ExperimentConfig(StrictModel):
    """完整实验配置."""

    version: Literal[1] = CONFIG_VERSION
    name: str = "experiment"
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    train: TrainConfig = Field(default_factory=TrainConfig)
    shadow: Optional[TrainConfig] = Field(None, description="影子模型配置，缺省时与 train 相同")
    attacks: List[AttackConfig] = Field(default_factory=_default_attacks)
    fpr_targets: List[float] = Field(default_factory=lambda: [0.001, 0.01])
    output_dir: str = "runs"
    seed: int = Field(0, ge=0)
    artifacts: ArtifactPaths = Field(default_factory=ArtifactPaths)
    sweep: Optional[SweepSpec] = None

    @field_validator("fpr_targets")
    @classmethod
    def validate_fpr_targets(cls, v):
        """验证 FPR 目标."""
        if any(not 0 <= f <= 1 for f in v):
            raise ValueError(f"fpr targets must lie in [0, 1], got {v}")
        return v

    @model_validator(mode="after")
    def validate_attack_labels(self):
        """验证攻击标签互不相同，否则输出文件会互相覆盖."""
        labels = [attack.label for attack in self.attacks]
        duplicates = sorted({label for label in labels if labels.count(label) > 1})
        if duplicates:
            raise ValueError(f"attacks share output labels: {duplicates}")
        return self

    @property
    def dataset_seed(self) -> int:
        """数据种子."""
        return self.dataset.seed if self.dataset.seed is not None else self.seed

    @property
    def train_seed(self) -> int:
        """训练种子."""
        return self.train.seed if self.train.seed is not None else self.seed

    @property
    def shadow_config(self) -> TrainConfig:
        """影子模型训练配置."""
        return self.shadow if self.shadow is not None else self.train

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """返回覆盖全部种子后的配置（命令行 --seed）."""
        updated = self.model_copy(deep=True)
        updated.seed = seed
        updated.dataset.seed = None
        updated.train.seed = None
        if updated.shadow is not None:
            updated.shadow.seed = None
        return updated


def _format_validation_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        location = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{location}: {err['msg']}")
    return "; ".join(parts)


def load_experiment(path: Union[str, Path]) -> ExperimentConfig:
    """读取并校验实验配置.

    Args:
        path: JSON 配置文件路径

    Returns:
        ExperimentConfig: 校验后的配置

    Raises:
        ConfigError: 文件不存在、不是合法 JSON 或不符合结构
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    try:
        return ExperimentConfig.model_validate_json(text)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}: {_format_validation_error(e)}") from e


def save_experiment(config: ExperimentConfig, path: Union[str, Path]) -> Path:
    """把配置写回 JSON 文件."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def canonical_json(obj: Any) -> str:
    """排序键的紧凑 JSON，用于哈希."""
    if isinstance(obj, BaseModel):
        obj = obj.model_dump(mode="json")
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(obj: Any) -> str:
    """配置的 SHA-256 前 12 位."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:12]
