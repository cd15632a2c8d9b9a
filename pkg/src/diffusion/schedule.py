"""噪声调度：α_t / ᾱ_t 表、信噪比与后验系数."""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from src.enums import ScheduleKind
from src.exceptions import InvalidArgumentError, ScheduleConstructionError

LINEAR_BETA_START = 1e-4
LINEAR_BETA_END = 0.02
COSINE_OFFSET = 0.008
MAX_BETA = 0.999
# 1 - ᾱ_t 低于该值时信噪比视为饱和
SNR_SATURATION_EPS = 1e-15

StepIndex = Union[int, np.ndarray]


@dataclass(frozen=True)
class PosteriorCoefficients:
    """q(x_{t-1} | x_t, x_0) 的均值系数与方差."""

    coef_xt: float
    coef_x0: float
    variance: float


@dataclass(frozen=True)
class SnrPoint:
    """单个时间步的信噪比记录."""

    t: int
    alpha_bar: float
    snr: float
    saturated: bool

    def to_dict(self) -> dict:
        """转换为字典."""
        return {
            "t": self.t,
            "alpha_bar": self.alpha_bar,
            "snr": self.snr,
            "saturated": self.saturated,
        }


@dataclass(frozen=True)
class NoiseSchedule:
    """T 步扩散过程的噪声调度.

    ``alphas`` 与 ``alpha_bars`` 长度均为 T+1，下标 0 处为哨兵值 α_0 = ᾱ_0 = 1。
    构建完成后数组只读，可在多个 worker 之间共享。
    """

    kind: ScheduleKind
    steps: int
    alphas: np.ndarray = field(repr=False)
    alpha_bars: np.ndarray = field(repr=False)

    @property
    def T(self) -> int:
        """总步数."""
        return self.steps

    @classmethod
    def from_alphas(cls, kind: ScheduleKind, alphas: Sequence[float]) -> "NoiseSchedule":
        """由 α 表（含 α_0 哨兵）构建调度并校验不变量.

        Args:
            kind: 调度类型
            alphas: 长度 T+1 的 α 表

        Returns:
            NoiseSchedule: 只读调度
        """
        alphas_arr = np.array(alphas, dtype=np.float64)
        if alphas_arr.ndim != 1 or alphas_arr.shape[0] < 3:
            raise InvalidArgumentError(
                f"alphas must be a 1-D table with at least 3 entries, got shape {alphas_arr.shape}"
            )
        if alphas_arr[0] != 1.0:
            raise ScheduleConstructionError(f"alpha_0 sentinel must be 1, got {alphas_arr[0]}")
        body = alphas_arr[1:]
        if not np.all(np.isfinite(body)) or np.any(body <= 0.0) or np.any(body > 1.0):
            raise ScheduleConstructionError("computed alpha_t outside (0, 1]")

        # 逐步累乘，保证 ᾱ_t == ᾱ_{t-1} * α_t 逐位成立
        alpha_bars = np.empty_like(alphas_arr)
        running = 1.0
        for t, alpha in enumerate(alphas_arr):
            running = running * float(alpha) if t > 0 else 1.0
            alpha_bars[t] = running

        alphas_arr.setflags(write=False)
        alpha_bars.setflags(write=False)
        return cls(kind=ScheduleKind(kind), steps=alphas_arr.shape[0] - 1, alphas=alphas_arr, alpha_bars=alpha_bars)

    def check_step(self, t: StepIndex, lower: int = 1) -> None:
        """校验时间步下标是否落在 [lower, T]."""
        arr = np.asarray(t)
        if arr.dtype.kind not in "iu":
            raise InvalidArgumentError(f"step index must be an integer, got {arr.dtype}")
        if arr.size and (arr.min() < lower or arr.max() > self.steps):
            raise InvalidArgumentError(f"step index out of range [{lower}, {self.steps}]: {t}")

    @property
    def betas(self) -> np.ndarray:
        """β_t = 1 - α_t（下标 0 为 0）."""
        return 1.0 - self.alphas

    def snr(self, t: int) -> float:
        """信噪比 SNR(t) = ᾱ_t / (1 - ᾱ_t)."""
        self.check_step(t)
        return self._snr_value(int(t))[0]

    def _snr_value(self, t: int) -> Tuple[float, bool]:
        alpha_bar = float(self.alpha_bars[t])
        denom = 1.0 - alpha_bar
        if denom < SNR_SATURATION_EPS:
            return alpha_bar / SNR_SATURATION_EPS, True
        return alpha_bar / denom, False

    def snr_profile(self) -> List[SnrPoint]:
        """返回 t = 1..T 的完整信噪比表."""
        points = []
        for t in range(1, self.steps + 1):
            value, saturated = self._snr_value(t)
            points.append(SnrPoint(t=t, alpha_bar=float(self.alpha_bars[t]), snr=value, saturated=saturated))
        return points

    def posterior_arrays(self, t: StepIndex) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """向量化的后验系数 (coef_xt, coef_x0, variance)."""
        self.check_step(t)
        t_arr = np.asarray(t)
        alpha = self.alphas[t_arr]
        alpha_bar = self.alpha_bars[t_arr]
        alpha_bar_prev = self.alpha_bars[t_arr - 1]
        denom = 1.0 - alpha_bar
        coef_xt = np.sqrt(alpha) * (1.0 - alpha_bar_prev) / denom
        coef_x0 = np.sqrt(alpha_bar_prev) * (1.0 - alpha) / denom
        variance = (1.0 - alpha) * (1.0 - alpha_bar_prev) / denom
        return coef_xt, coef_x0, variance

    def posterior_coefficients(self, t: int) -> PosteriorCoefficients:
        """后验 q(x_{t-1}|x_t, x_0) 的系数."""
        coef_xt, coef_x0, variance = self.posterior_arrays(np.asarray(int(t)))
        return PosteriorCoefficients(coef_xt=float(coef_xt), coef_x0=float(coef_x0), variance=float(variance))

    def to_dict(self) -> Dict[str, Any]:
        """序列化为 {kind, T, alphas}."""
        return {"kind": self.kind.value, "T": self.steps, "alphas": [float(a) for a in self.alphas]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NoiseSchedule":
        """由 ``to_dict`` 的输出恢复调度."""
        schedule = cls.from_alphas(ScheduleKind(data["kind"]), data["alphas"])
        if schedule.steps != int(data["T"]):
            raise InvalidArgumentError(f"T={data['T']} does not match {schedule.steps} alphas")
        return schedule


def _linear_betas(T: int) -> np.ndarray:
    scale = 1000.0 / T
    betas = np.linspace(LINEAR_BETA_START * scale, LINEAR_BETA_END * scale, T, dtype=np.float64)
    # 小 T 时按比例放大后 β 会超过 1
    return np.minimum(betas, MAX_BETA)


def _cosine_alpha_bar_fn(t: np.ndarray, T: int) -> np.ndarray:
    return np.cos(((t / T + COSINE_OFFSET) / (1.0 + COSINE_OFFSET)) * (math.pi / 2)) ** 2


def _cosine_betas(T: int) -> np.ndarray:
    steps = np.arange(T + 1, dtype=np.float64)
    g = _cosine_alpha_bar_fn(steps, T)
    betas = 1.0 - g[1:] / g[:-1]
    return np.clip(betas, 0.0, MAX_BETA)


def build_schedule(kind: Union[ScheduleKind, str], T: int) -> NoiseSchedule:
    """构建噪声调度.

    Args:
        kind: ``linear`` 或 ``cosine``
        T: 总步数，至少为 2

    Returns:
        NoiseSchedule: 满足全部调度不变量的只读调度
    """
    if isinstance(T, bool) or not isinstance(T, (int, np.integer)) or T < 2:
        raise InvalidArgumentError(f"T must be an integer >= 2, got {T}")
    kind = ScheduleKind(kind)
    T = int(T)

    if kind is ScheduleKind.LINEAR:
        betas = _linear_betas(T)
    else:
        betas = _cosine_betas(T)

    alphas = np.concatenate([[1.0], 1.0 - betas])
    schedule = NoiseSchedule.from_alphas(kind, alphas)

    if not np.all(np.diff(schedule.alpha_bars[1:]) < 0):
        raise ScheduleConstructionError(f"alpha_bar is not strictly decreasing for {kind.value} T={T}")
    return schedule


def snr(schedule: NoiseSchedule, t: int) -> float:
    """SNR(t) = ᾱ_t / (1 - ᾱ_t)；饱和时返回大的有限值."""
    return schedule.snr(t)


def posterior_coefficients(schedule: NoiseSchedule, t: int) -> PosteriorCoefficients:
    """后验系数，见 ``NoiseSchedule.posterior_coefficients``."""
    return schedule.posterior_coefficients(t)


def other_schedule_kind(kind: Union[ScheduleKind, str]) -> ScheduleKind:
    """返回另一种调度类型，用于模拟攻击者猜错调度."""
    return ScheduleKind.COSINE if ScheduleKind(kind) is ScheduleKind.LINEAR else ScheduleKind.LINEAR
