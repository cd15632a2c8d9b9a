"""小型全连接去噪网络：前向、精确反向梯度与 Adam 优化器."""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence, Tuple, Union

import numpy as np

from src.enums import Activation
from src.exceptions import InvalidArgumentError, TrainingDivergedError
from src.utils.seeding import make_rng

ParamGrads = List[np.ndarray]
# 时间嵌入的角度尺度：t/T 映射到 [0, 1000]
TIME_SCALE = 1000.0


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.SILU:
        return z * _sigmoid(z)
    return np.maximum(z, 0)


def _activate_grad(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.SILU:
        s = _sigmoid(z)
        return s * (1.0 + z * (1.0 - s))
    return (z > 0).astype(z.dtype)


@dataclass(frozen=True)
class TimeEmbedding:
    """t/T 的正弦时间嵌入，频率为 1 到 1/10000 的等比数列."""

    dim: int

    def __post_init__(self):
        if self.dim <= 0 or self.dim % 2:
            raise InvalidArgumentError(f"time embedding dim must be a positive even integer, got {self.dim}")

    @property
    def frequencies(self) -> np.ndarray:
        """频率序列."""
        return np.geomspace(1.0, 1e-4, self.dim // 2)

    def __call__(self, t: np.ndarray, T: int) -> np.ndarray:
        """计算嵌入，返回形状 (B, dim)."""
        angles = (np.asarray(t, dtype=np.float64)[:, None] / T) * TIME_SCALE * self.frequencies[None, :]
        return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


class DenseNet:
    """以 [x, emb(t)] 为输入、输出与 x 同维的多层感知机.

    隐藏层使用 SiLU 或 ReLU，输出层为恒等映射。
    """

    def __init__(
        self,
        layer_dims: Sequence[int],
        weights: Sequence[np.ndarray],
        biases: Sequence[np.ndarray],
        time_embed_dim: int,
        activation: Union[Activation, str] = Activation.SILU,
    ):
        """初始化网络.

        Args:
            layer_dims: 各层宽度，首项 = data_dim + time_embed_dim，末项 = data_dim
            weights: 各层权重矩阵，形状 (in, out)
            biases: 各层偏置向量
            time_embed_dim: 时间嵌入维度
            activation: 隐藏层激活函数
        """
        self.layer_dims = [int(d) for d in layer_dims]
        self.activation = Activation(activation)
        self.embedding = TimeEmbedding(time_embed_dim)
        self.weights = list(weights)
        self.biases = list(biases)
        self._frozen = False
        self._validate()

    @classmethod
    def initialize(
        cls,
        data_dim: int,
        hidden_dims: Sequence[int],
        time_embed_dim: int = 16,
        activation: Union[Activation, str] = Activation.SILU,
        seed: int = 0,
        dtype: type = np.float32,
        zero_final: bool = True,
    ) -> "DenseNet":
        """He-uniform 初始化隐藏层，输出层默认全零.

        Args:
            data_dim: 数据维度
            hidden_dims: 隐藏层宽度
            time_embed_dim: 时间嵌入维度
            activation: 隐藏层激活函数
            seed: 初始化种子
            dtype: 参数精度
            zero_final: 输出层是否零初始化

        Returns:
            DenseNet: 新网络
        """
        if data_dim <= 0 or any(h <= 0 for h in hidden_dims):
            raise InvalidArgumentError(f"layer widths must be positive: data_dim={data_dim}, hidden={hidden_dims}")
        rng = make_rng(seed, "dense-net-init")
        dims = [data_dim + time_embed_dim, *hidden_dims, data_dim]
        weights, biases = [], []
        for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            is_last = k == len(dims) - 2
            limit = np.sqrt(6.0 / fan_in)
            if is_last and zero_final:
                w = np.zeros((fan_in, fan_out))
            else:
                w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            weights.append(w.astype(dtype))
            biases.append(np.zeros(fan_out, dtype=dtype))
        return cls(dims, weights, biases, time_embed_dim, activation)

    def _validate(self) -> None:
        if len(self.layer_dims) < 2:
            raise InvalidArgumentError("a DenseNet needs at least an input and an output layer")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise InvalidArgumentError("number of weight/bias arrays does not match layer_dims")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_dims[k], self.layer_dims[k + 1])
            if w.shape != expected or b.shape != (expected[1],):
                raise InvalidArgumentError(
                    f"layer {k}: weight {w.shape} / bias {b.shape} incompatible with {expected}"
                )
        if self.layer_dims[0] != self.data_dim + self.embedding.dim:
            raise InvalidArgumentError(
                f"input width {self.layer_dims[0]} != data_dim {self.data_dim} + time_embed_dim {self.embedding.dim}"
            )

    @property
    def data_dim(self) -> int:
        """数据维度."""
        return self.layer_dims[-1]

    @property
    def hidden_dims(self) -> List[int]:
        """隐藏层宽度."""
        return self.layer_dims[1:-1]

    @property
    def dtype(self) -> np.dtype:
        """参数精度."""
        return self.weights[0].dtype

    @property
    def frozen(self) -> bool:
        """是否已冻结."""
        return self._frozen

    def parameters(self) -> List[np.ndarray]:
        """按 [W0, b0, W1, b1, ...] 顺序返回参数."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def named_parameters(self) -> Dict[str, np.ndarray]:
        """带名字的参数."""
        named = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            named[f"layers.{k}.weight"] = w
            named[f"layers.{k}.bias"] = b
        return named

    def copy(self) -> "DenseNet":
        """深拷贝（拷贝可写）."""
        return DenseNet(
            self.layer_dims,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.embedding.dim,
            self.activation,
        )

    def freeze(self) -> "DenseNet":
        """冻结参数，之后只允许只读访问."""
        for p in self.parameters():
            p.setflags(write=False)
        self._frozen = True
        return self

    def _prepare_inputs(self, x: np.ndarray, t, T: int) -> Tuple[np.ndarray, np.ndarray, bool]:
        x_arr = np.asarray(x)
        single = x_arr.ndim == 1
        x2d = x_arr[None, :] if single else x_arr
        if x2d.ndim != 2 or x2d.shape[1] != self.data_dim:
            raise InvalidArgumentError(f"expected inputs with {self.data_dim} features, got shape {x_arr.shape}")
        t_arr = np.broadcast_to(np.asarray(t), (x2d.shape[0],))
        if t_arr.dtype.kind not in "iu" or t_arr.min() < 1 or t_arr.max() > T:
            raise InvalidArgumentError(f"step index must be an integer in [1, {T}], got {t}")
        features = np.concatenate([x2d, self.embedding(t_arr, T)], axis=1).astype(self.dtype)
        return features, t_arr, single

    def _forward_with_cache(self, features: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
        activations = [features]
        pre_activations = []
        a = features
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            pre_activations.append(z)
            a = z if k == last else _activate(z, self.activation)
            activations.append(a)
        return a, activations, pre_activations

    def forward(self, x: np.ndarray, t, T: int) -> np.ndarray:
        """前向计算 ε̂_θ(x_t, t) 或 x̂_θ(x_t, t).

        Args:
            x: 形状 (d,) 或 (B, d) 的输入
            t: 时间步（标量或长度 B 的数组）
            T: 总步数

        Returns:
            np.ndarray: 与 x 同形状的输出
        """
        features, _, single = self._prepare_inputs(x, t, T)
        out, _, _ = self._forward_with_cache(features)
        return out[0] if single else out

    def vjp(self, x: np.ndarray, t, T: int) -> Tuple[np.ndarray, Callable[[np.ndarray], ParamGrads]]:
        """前向计算并返回反向传播闭包.

        Returns:
            Tuple: (输出, pullback)，pullback(upstream) 返回 ⟨upstream, 输出⟩ 对参数的梯度
        """
        features, _, single = self._prepare_inputs(x, t, T)
        out, activations, pre_activations = self._forward_with_cache(features)

        def pullback(upstream: np.ndarray) -> ParamGrads:
            g = np.asarray(upstream)
            g = g[None, :] if single and g.ndim == 1 else g
            if g.shape != out.shape:
                raise InvalidArgumentError(f"upstream shape {np.shape(upstream)} does not match outputs {out.shape}")
            if not np.all(np.isfinite(g)):
                raise InvalidArgumentError("upstream gradient contains non-finite values")

            delta = g.astype(self.dtype)
            grads: List[np.ndarray] = [delta] * (2 * len(self.weights))
            for k in range(len(self.weights) - 1, -1, -1):
                grads[2 * k] = activations[k].T @ delta
                grads[2 * k + 1] = delta.sum(axis=0)
                if k > 0:
                    delta = (delta @ self.weights[k].T) * _activate_grad(pre_activations[k - 1], self.activation)
            return grads

        return (out[0] if single else out), pullback

    def gradient(self, x: np.ndarray, t, T: int, upstream: np.ndarray) -> ParamGrads:
        """⟨upstream, forward(x, t)⟩ 对全部参数的精确反向梯度.

        Returns:
            ParamGrads: 与 ``parameters()`` 对齐的梯度列表
        """
        _, pullback = self.vjp(x, t, T)
        return pullback(upstream)


@dataclass
class AdamState:
    """Adam 优化器状态."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moments: List[np.ndarray] = field(default_factory=list, repr=False)
    second_moments: List[np.ndarray] = field(default_factory=list, repr=False)

    @classmethod
    def for_net(cls, net: DenseNet, learning_rate: float = 1e-3) -> "AdamState":
        """为网络创建全零的一阶/二阶矩."""
        params = net.parameters()
        return cls(
            learning_rate=learning_rate,
            first_moments=[np.zeros_like(p) for p in params],
            second_moments=[np.zeros_like(p) for p in params],
        )


def net_forward(net: DenseNet, x: np.ndarray, t, T: int) -> np.ndarray:
    """网络前向，见 ``DenseNet.forward``."""
    return net.forward(x, t, T)


def net_gradient(net: DenseNet, x: np.ndarray, t, T: int, upstream: np.ndarray) -> ParamGrads:
    """网络反向梯度，见 ``DenseNet.gradient``."""
    return net.gradient(x, t, T, upstream)


def adam_step(state: AdamState, net: DenseNet, grads: ParamGrads) -> Tuple[DenseNet, AdamState]:
    """带偏差修正的 Adam 更新，原地修改网络参数与状态.

    Args:
        state: 优化器状态
        net: 待更新网络（不可为冻结状态）
        grads: 与 ``net.parameters()`` 对齐的梯度

    Returns:
        Tuple[DenseNet, AdamState]: 更新后的网络与状态
    """
    if net.frozen:
        raise InvalidArgumentError("cannot update a frozen network")
    params = net.parameters()
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise InvalidArgumentError("gradients are not shaped like the network parameters")
    for idx, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(
                "non-finite gradient rejected",
                {"step": state.step, "parameter": list(net.named_parameters())[idx]},
            )
    if not state.first_moments:
        state.first_moments = [np.zeros_like(p) for p in params]
        state.second_moments = [np.zeros_like(p) for p in params]

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.first_moments, state.second_moments):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return net, state
