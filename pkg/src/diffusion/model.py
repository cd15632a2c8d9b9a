"""扩散模型核心：前向加噪、x0 预测、逐步变分下界项与祖先采样."""

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Protocol, Tuple, Union

import numpy as np

from src.diffusion.schedule import NoiseSchedule
from src.enums import Parameterization, TrajectoryKind
from src.exceptions import InvalidArgumentError, NumericallyDegenerateError
from src.utils.seeding import make_rng

DEFAULT_CLAMP = 3.0
MIN_ALPHA_BAR = 1e-12
# 方差为 0 时（t = 1）KL 使用的方差下限
SIGMA_FLOOR_SQ = 1e-6

StepArg = Union[int, np.ndarray]


class Denoiser(Protocol):
    """去噪网络接口（DenseNet 满足该接口）."""

    @property
    def data_dim(self) -> int:
        ...

    def forward(self, x: np.ndarray, t, T: int) -> np.ndarray:
        ...


class Reconstructor(Protocol):
    """灰盒攻击可见的唯一接口：给定 (x_t, t) 返回重建的 x0."""

    @property
    def T(self) -> int:
        ...

    def reconstruct(self, x_t: np.ndarray, t: StepArg) -> np.ndarray:
        ...


class Sampler(Protocol):
    """黑盒攻击可见的唯一接口：只能获取生成样本."""

    @property
    def data_dim(self) -> int:
        ...

    def sample(self, count: int, seed: int) -> np.ndarray:
        ...


class SamplingAPI:
    """模型的黑盒门面：只提供 ``sample``."""

    __slots__ = ("_sample", "_data_dim")

    def __init__(self, model: "DiffusionModel"):
        """初始化门面.

        Args:
            model: 被包装的扩散模型
        """
        self._data_dim = model.data_dim

        def _sample(count: int, seed: int) -> np.ndarray:
            return ancestral_sample(model, count, seed)  # type: ignore[return-value]

        self._sample = _sample

    @property
    def data_dim(self) -> int:
        """数据维度."""
        return self._data_dim

    def sample(self, count: int, seed: int) -> np.ndarray:
        """生成 count 个样本."""
        return self._sample(count, seed)


@dataclass(frozen=True)
class Gaussian:
    """各向同性高斯分布."""

    mean: np.ndarray
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise InvalidArgumentError(f"variance must be non-negative, got {self.variance}")
        if not np.all(np.isfinite(self.mean)):
            raise InvalidArgumentError("Gaussian mean must be finite")


@dataclass(frozen=True)
class DiffusionModel:
    """去噪网络 + 噪声调度 + 参数化方式."""

    net: Denoiser
    schedule: NoiseSchedule
    parameterization: Parameterization = Parameterization.EPSILON
    clamp: float = DEFAULT_CLAMP

    def __post_init__(self):
        object.__setattr__(self, "parameterization", Parameterization(self.parameterization))
        if self.clamp <= 0:
            raise InvalidArgumentError(f"clamp must be positive, got {self.clamp}")

    @property
    def data_dim(self) -> int:
        """数据维度."""
        return self.net.data_dim

    @property
    def T(self) -> int:
        """总步数."""
        return self.schedule.steps

    def as_reconstructor(self) -> "ReconstructionAPI":
        """返回只暴露重建结果的门面."""
        return ReconstructionAPI(self)

    def as_sampler(self) -> SamplingAPI:
        """返回只暴露生成样本的门面."""
        return SamplingAPI(self)


class ReconstructionAPI:
    """模型的灰盒门面：只提供 ``reconstruct`` 与总步数 T."""

    __slots__ = ("_reconstruct", "_steps")

    def __init__(self, model: DiffusionModel):
        """初始化门面.

        Args:
            model: 被包装的扩散模型，之后不再对外暴露
        """
        self._steps = model.T

        def _reconstruct(x_t: np.ndarray, t: StepArg) -> np.ndarray:
            return predict_x0(model, x_t, t)

        self._reconstruct = _reconstruct

    @property
    def T(self) -> int:
        """总步数."""
        return self._steps

    def reconstruct(self, x_t: np.ndarray, t: StepArg) -> np.ndarray:
        """给定 (x_t, t) 返回中间输出 x̂_θ(x_t, t)."""
        return self._reconstruct(x_t, t)


@dataclass(frozen=True)
class LossTrajectory:
    """单个查询样本的逐步损失轨迹."""

    sample_id: int
    kind: TrajectoryKind
    values: Dict[int, float]
    noise_draws: int = 1
    mask: Optional[FrozenSet[int]] = field(default=None)

    def __post_init__(self):
        if self.noise_draws < 1:
            raise InvalidArgumentError(f"noise_draws must be >= 1, got {self.noise_draws}")
        for t, value in self.values.items():
            if not np.isfinite(value) or value < 0:
                raise InvalidArgumentError(f"trajectory value at t={t} must be finite and >= 0, got {value}")
        if self.mask is not None and not set(self.values).issubset(self.mask):
            raise InvalidArgumentError("trajectory keys must be a subset of its mask")

    @property
    def steps(self) -> List[int]:
        """按升序排列的时间步."""
        return sorted(self.values)

    def as_array(self) -> np.ndarray:
        """按时间步升序返回损失值."""
        return np.array([self.values[t] for t in self.steps], dtype=np.float64)

    def restricted(self, keep: Iterable[int]) -> "LossTrajectory":
        """只保留 ``keep`` 中的时间步，并把它们记入掩码."""
        keep_set = frozenset(keep)
        mask = keep_set if self.mask is None else keep_set & self.mask
        values = {t: v for t, v in self.values.items() if t in mask}
        return LossTrajectory(self.sample_id, self.kind, values, self.noise_draws, frozenset(mask))

    def to_rows(self) -> List[dict]:
        """转换为 CSV 行."""
        return [
            {
                "sample_id": self.sample_id,
                "kind": self.kind.value,
                "t": t,
                "value": self.values[t],
                "noise_draws": self.noise_draws,
            }
            for t in self.steps
        ]


def _as_float_array(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _column(values: np.ndarray, like: np.ndarray) -> np.ndarray:
    """把逐步系数整理成可与 ``like`` 广播的形状."""
    values = np.asarray(values, dtype=np.float64)
    if like.ndim == 1 or values.ndim == 0:
        return values
    return values.reshape(-1, 1)


def noise_block(noise_seed: int, sample_id: int, t: int, draws: int, dim: int) -> np.ndarray:
    """(样本, 时间步) 对应的确定性噪声块，第 k 行即第 k 次抽样."""
    return make_rng(noise_seed, sample_id, t).standard_normal((draws, dim))


def forward_sample(schedule: NoiseSchedule, x0: np.ndarray, t: StepArg, eps: np.ndarray) -> np.ndarray:
    """直接采样 x_t = √ᾱ_t·x0 + √(1-ᾱ_t)·eps.

    Args:
        schedule: 噪声调度
        x0: 原始数据，形状 (d,) 或 (B, d)
        t: 时间步，允许 0（哨兵，返回 x0）
        eps: 与 x0 同形状的噪声

    Returns:
        np.ndarray: 加噪后的 x_t
    """
    schedule.check_step(t, lower=0)
    x0 = _as_float_array(x0)
    eps = _as_float_array(eps)
    if x0.shape != eps.shape and not (x0.ndim == 1 and eps.ndim == 2 and eps.shape[1] == x0.shape[0]):
        raise InvalidArgumentError(f"x0 shape {x0.shape} does not match noise shape {eps.shape}")
    alpha_bar = schedule.alpha_bars[np.asarray(t)]
    scale = _column(np.sqrt(alpha_bar), eps)
    noise_scale = _column(np.sqrt(1.0 - alpha_bar), eps)
    return scale * x0 + noise_scale * eps


def predict_x0(model: DiffusionModel, x_t: np.ndarray, t: StepArg) -> np.ndarray:
    """由 x_t 预测 x0，并截断到 [-C, C].

    ε 参数化时按 (x_t - √(1-ᾱ_t)·ε̂)/√ᾱ_t 反推，x0 参数化时直接使用网络输出。
    """
    schedule = model.schedule
    schedule.check_step(t)
    x_t = _as_float_array(x_t)
    if x_t.shape[-1] != model.data_dim:
        raise InvalidArgumentError(f"expected {model.data_dim} features, got shape {x_t.shape}")
    alpha_bar = schedule.alpha_bars[np.asarray(t)]
    if np.any(alpha_bar < MIN_ALPHA_BAR):
        raise NumericallyDegenerateError(f"alpha_bar below {MIN_ALPHA_BAR} at t={t}; x0 cannot be recovered")

    output = _as_float_array(model.net.forward(x_t, t, schedule.steps))
    if model.parameterization is Parameterization.X0:
        x0_hat = output
    else:
        x0_hat = (x_t - _column(np.sqrt(1.0 - alpha_bar), x_t) * output) / _column(np.sqrt(alpha_bar), x_t)
    return np.clip(x0_hat, -model.clamp, model.clamp)


def _posterior_mean(
    schedule: NoiseSchedule, x_t: np.ndarray, x0: np.ndarray, t: StepArg
) -> Tuple[np.ndarray, np.ndarray]:
    coef_xt, coef_x0, variance = schedule.posterior_arrays(t)
    mean = _column(coef_xt, x_t) * x_t + _column(coef_x0, x_t) * x0
    return mean, variance


def posterior_q(schedule: NoiseSchedule, x_t: np.ndarray, x0: np.ndarray, t: int) -> Gaussian:
    """真实后验 q(x_{t-1} | x_t, x0)."""
    mean, variance = _posterior_mean(schedule, _as_float_array(x_t), _as_float_array(x0), np.asarray(int(t)))
    return Gaussian(mean=mean, variance=float(variance))


def p_theta(model: DiffusionModel, x_t: np.ndarray, t: int) -> Gaussian:
    """模型反向分布 p_θ(x_{t-1} | x_t)，方差固定为 Σ_q(t)."""
    x0_hat = predict_x0(model, x_t, int(t))
    return posterior_q(model.schedule, x_t, x0_hat, t)


def _kl_isotropic(
    mean_q: np.ndarray, var_q: np.ndarray, mean_p: np.ndarray, var_p: np.ndarray
) -> np.ndarray:
    """逐行计算各向同性高斯 KL(q || p)，单位 nats."""
    mean_q = np.atleast_2d(mean_q)
    mean_p = np.atleast_2d(mean_p)
    dim = mean_q.shape[1]
    var_q = np.broadcast_to(np.asarray(var_q, dtype=np.float64), (mean_q.shape[0],))
    var_p = np.broadcast_to(np.asarray(var_p, dtype=np.float64), (mean_q.shape[0],))
    if np.any(var_q < 0):
        raise InvalidArgumentError("q variance must be non-negative")

    both_zero = (var_q == 0) & (var_p == 0)
    if np.any((var_p == 0) & ~both_zero) or np.any((var_q == 0) & (var_p > 0)):
        raise NumericallyDegenerateError("KL between a degenerate and a non-degenerate Gaussian is unbounded")

    safe_p = np.where(both_zero, SIGMA_FLOOR_SQ, var_p)
    ratio = np.where(both_zero, 1.0, var_q / safe_p)
    sq_dist = np.sum((mean_q - mean_p) ** 2, axis=1)
    return 0.5 * (dim * (ratio - 1.0 - np.log(ratio)) + sq_dist / safe_p)


def kl_gaussian(q: Gaussian, p: Gaussian) -> float:
    """各向同性高斯间的闭式 KL 散度.

    两个方差同时为 0 时使用 σ_floor² = 1e-6 代替。

    Args:
        q: 分布 q
        p: 分布 p

    Returns:
        float: KL(q || p)，单位 nats
    """
    mean_q = np.ravel(q.mean)
    mean_p = np.ravel(p.mean)
    if mean_q.shape != mean_p.shape:
        raise InvalidArgumentError(f"dimension mismatch: {mean_q.shape} vs {mean_p.shape}")
    return float(_kl_isotropic(mean_q[None], q.variance, mean_p[None], p.variance)[0])


def decoder_variance(schedule: NoiseSchedule) -> float:
    """ℒ_0 解码器方差：Σ_q(1) = 0，取截断后的 Σ_q(2)."""
    return float(schedule.posterior_arrays(np.asarray(2))[2])


def prior_term(schedule: NoiseSchedule, x0: np.ndarray) -> float:
    """ℒ_T = KL(q(x_T|x0) || N(0, I))，与模型无关."""
    x0 = _as_float_array(x0)
    alpha_bar = float(schedule.alpha_bars[schedule.steps])
    mean = np.sqrt(alpha_bar) * x0
    variance = 1.0 - alpha_bar
    # 舍入可能带来极小的负数
    return max(0.0, kl_gaussian(Gaussian(mean, variance), Gaussian(np.zeros_like(x0), 1.0)))


def _step_terms(
    model: DiffusionModel,
    x0: np.ndarray,
    steps: np.ndarray,
    noise_seed: int,
    sample_id: int,
    noise_draws: int,
) -> np.ndarray:
    """对给定时间步计算 ℒ_{t-1}（t=1 时为 ℒ_0 解码项），对噪声抽样取平均."""
    schedule = model.schedule
    dim = model.data_dim
    eps = np.concatenate([noise_block(noise_seed, sample_id, int(t), noise_draws, dim) for t in steps])
    ts = np.repeat(steps, noise_draws)
    x_t = forward_sample(schedule, x0, ts, eps)
    x0_hat = predict_x0(model, x_t, ts)
    mean_p, variance = _posterior_mean(schedule, x_t, x0_hat, ts)

    terms = np.empty(ts.shape[0], dtype=np.float64)
    first = ts == 1
    if np.any(first):
        # 高斯负对数似然减去只与方差有关的最小值
        terms[first] = 0.5 * np.sum((x0 - mean_p[first]) ** 2, axis=1) / decoder_variance(schedule)
    rest = ~first
    if np.any(rest):
        mean_q, _ = _posterior_mean(schedule, x_t[rest], np.broadcast_to(x0, x_t[rest].shape), ts[rest])
        terms[rest] = _kl_isotropic(mean_q, variance[rest], mean_p[rest], variance[rest])
    return terms.reshape(len(steps), noise_draws).mean(axis=1)


def _check_query(model: DiffusionModel, x0: np.ndarray, noise_draws: int) -> np.ndarray:
    x0 = _as_float_array(x0)
    if x0.shape != (model.data_dim,):
        raise InvalidArgumentError(f"expected a single sample with {model.data_dim} features, got {x0.shape}")
    if isinstance(noise_draws, bool) or int(noise_draws) != noise_draws or noise_draws <= 0:
        raise InvalidArgumentError(f"noise_draws must be a positive integer, got {noise_draws}")
    return x0


def loss_term(
    model: DiffusionModel,
    x0: np.ndarray,
    t: int,
    noise_draws: int = 1,
    noise_seed: int = 0,
    sample_id: int = 0,
) -> float:
    """单个变分下界项 ℒ_t，t ∈ [0, T].

    t = 0 为解码负对数似然（平移到非负），1 ≤ t ≤ T-1 为第 t+1 步的 KL 项，
    t = T 为先验项。
    """
    x0 = _check_query(model, x0, noise_draws)
    if isinstance(t, bool) or int(t) != t or not 0 <= t <= model.T:
        raise InvalidArgumentError(f"loss index must be an integer in [0, {model.T}], got {t}")
    if t == model.T:
        return prior_term(model.schedule, x0)
    return float(_step_terms(model, x0, np.array([int(t) + 1]), noise_seed, sample_id, noise_draws)[0])


def _trajectory_terms(
    model: DiffusionModel, x0: np.ndarray, noise_seed: int, sample_id: int, noise_draws: int
) -> np.ndarray:
    steps = np.arange(1, model.T + 1)
    step_terms = _step_terms(model, x0, steps, noise_seed, sample_id, noise_draws)
    return np.append(step_terms, prior_term(model.schedule, x0))


def exact_trajectory(
    model: DiffusionModel,
    x0: np.ndarray,
    noise_seed: int = 0,
    noise_draws: int = 1,
    sample_id: int = 0,
) -> LossTrajectory:
    """白盒精确损失轨迹 {ℒ_t}，t = 0..T."""
    x0 = _check_query(model, x0, noise_draws)
    terms = _trajectory_terms(model, x0, noise_seed, sample_id, noise_draws)
    values = {t: float(v) for t, v in enumerate(terms)}
    return LossTrajectory(sample_id, TrajectoryKind.EXACT, values, noise_draws)


def variational_bound(
    model: DiffusionModel,
    x0: np.ndarray,
    noise_seed: int = 0,
    noise_draws: int = 1,
    sample_id: int = 0,
) -> float:
    """一次性计算 ℒ_vlb = ℒ_0 + ... + ℒ_T，与轨迹共享噪声抽样."""
    x0 = _check_query(model, x0, noise_draws)
    total = 0
    for term in _trajectory_terms(model, x0, noise_seed, sample_id, noise_draws):
        total += float(term)
    return float(total)


def estimated_trajectory(
    reconstructor: Reconstructor,
    x0: np.ndarray,
    guessed_schedule: NoiseSchedule,
    mask: Optional[Iterable[int]] = None,
    noise_seed: int = 0,
    sample_id: int = 0,
) -> LossTrajectory:
    """灰盒估计损失轨迹 ℒ̂_t = ‖x̂_θ(x_t, t) - x0‖²（不乘缩放因子）.

    Args:
        reconstructor: 只能返回重建结果的模型门面
        x0: 查询样本
        guessed_schedule: 攻击者猜测的噪声调度（可能与真实调度不同）
        mask: 可见的时间步子集（⊆ [1, T]），None 表示全部可见
        noise_seed: 噪声种子
        sample_id: 样本编号

    Returns:
        LossTrajectory: Estimated 类型的轨迹
    """
    if guessed_schedule.steps != reconstructor.T:
        raise InvalidArgumentError(
            f"guessed schedule has T={guessed_schedule.steps}, model has T={reconstructor.T}"
        )
    x0 = _as_float_array(x0)
    if mask is None:
        steps = np.arange(1, reconstructor.T + 1)
        mask_set = None
    else:
        mask_set = frozenset(int(t) for t in mask)
        if not mask_set:
            raise InvalidArgumentError("mask must retain at least one step")
        steps = np.array(sorted(mask_set))
        guessed_schedule.check_step(steps)

    eps = np.stack([noise_block(noise_seed, sample_id, int(t), 1, x0.shape[0])[0] for t in steps])
    x_t = forward_sample(guessed_schedule, x0, steps, eps)
    x0_hat = _as_float_array(reconstructor.reconstruct(x_t, steps))
    errors = np.sum((x0_hat - x0) ** 2, axis=1)
    values = {int(t): float(e) for t, e in zip(steps, errors)}
    return LossTrajectory(sample_id, TrajectoryKind.ESTIMATED, values, 1, mask_set)


def ancestral_sample(
    model: DiffusionModel, count: int, seed: int = 0, return_trajectory: bool = False
) -> Union[np.ndarray, Tuple[np.ndarray, List[np.ndarray]]]:
    """祖先采样：x_T ~ N(0, I)，逐步从 p_θ(x_{t-1}|x_t) 采样，t = 1 时不加噪声.

    Args:
        model: 扩散模型
        count: 样本数
        seed: 采样种子
        return_trajectory: 是否同时返回每一步的 x̂0 重建

    Returns:
        np.ndarray: 形状 (count, d) 的样本；若 return_trajectory 为真，同时返回逐步重建列表
    """
    if isinstance(count, bool) or int(count) != count or count < 1:
        raise InvalidArgumentError(f"count must be a positive integer, got {count}")
    schedule = model.schedule
    rng = make_rng(seed, "ancestral")
    x = rng.standard_normal((int(count), model.data_dim))
    reconstructions: List[np.ndarray] = []
    for t in range(schedule.steps, 0, -1):
        x0_hat = predict_x0(model, x, t)
        if return_trajectory:
            reconstructions.append(x0_hat)
        mean, variance = _posterior_mean(schedule, x, x0_hat, np.asarray(t))
        if t > 1:
            x = mean + np.sqrt(float(variance)) * rng.standard_normal(x.shape)
        else:
            x = mean
    if return_trajectory:
        return x, reconstructions
    return x
