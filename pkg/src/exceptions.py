"""异常类型定义."""

from typing import Any, Dict, Optional


class DiffMIAError(Exception):
    """所有 DiffMIA 错误的基类."""


class InvalidArgumentError(DiffMIAError, ValueError):
    """参数不合法."""


class ScheduleConstructionError(DiffMIAError):
    """噪声调度构建失败（α_t 超出 (0, 1]）."""


class NumericallyDegenerateError(DiffMIAError):
    """数值退化，例如 ᾱ_t 过小无法反推 x0."""


class EmptyTrajectoryError(DiffMIAError):
    """截断或抑制后损失轨迹为空."""


class TrainingDivergedError(DiffMIAError):
    """训练过程中出现非有限值."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        """初始化异常.

        Args:
            message: 错误信息
            diagnostics: 诊断信息（步数、损失、出错参数等）
        """
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{base} ({details})"


class CheckpointError(DiffMIAError):
    """检查点读写错误."""


class CheckpointFormatError(CheckpointError):
    """检查点格式或版本不匹配."""


class CheckpointTruncatedError(CheckpointError):
    """检查点文件被截断."""


class CheckpointShapeError(CheckpointError):
    """检查点参数形状不匹配."""


class ConfigError(DiffMIAError):
    """实验配置错误."""
