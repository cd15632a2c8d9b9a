"""合成数据集、成员划分与平衡查询集."""

import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.enums import DatasetKind
from src.exceptions import InvalidArgumentError
from src.utils.seeding import make_rng


@dataclass(frozen=True)
class Dataset:
    """原始样本 + 逐坐标标准化参数.

    ``raw_points`` 保持生成时的坐标；``points`` 返回标准化后的坐标。
    """

    name: str
    kind: DatasetKind
    raw_points: np.ndarray = field(repr=False)
    generator_params: Dict[str, Any] = field(default_factory=dict, repr=False)
    seed: int = 0
    mean: Optional[np.ndarray] = field(default=None, repr=False)
    scale: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        raw = np.asarray(self.raw_points, dtype=np.float64)
        if raw.ndim != 2 or raw.shape[0] == 0 or raw.shape[1] == 0:
            raise InvalidArgumentError(f"dataset points must be a non-empty (n, d) array, got {raw.shape}")
        raw.setflags(write=False)
        object.__setattr__(self, "raw_points", raw)

    @property
    def n(self) -> int:
        """样本数."""
        return self.raw_points.shape[0]

    @property
    def dim(self) -> int:
        """数据维度."""
        return self.raw_points.shape[1]

    @property
    def points(self) -> np.ndarray:
        """标准化后的样本（未标准化时返回原始样本）."""
        if self.mean is None or self.scale is None:
            return self.raw_points
        return (self.raw_points - self.mean) / self.scale

    def standardized(self, fit_ids: Optional[Sequence[int]] = None) -> "Dataset":
        """用 ``fit_ids`` 对应样本的均值与总体标准差重新标准化.

        Args:
            fit_ids: 拟合统计量的样本编号，None 表示全部样本

        Returns:
            Dataset: 新的数据集对象
        """
        subset = self.raw_points if fit_ids is None else self.raw_points[np.asarray(fit_ids, dtype=np.int64)]
        if subset.shape[0] == 0:
            raise InvalidArgumentError("cannot standardize on an empty subset")
        mean = subset.mean(axis=0)
        scale = subset.std(axis=0)
        # 常数坐标不缩放
        scale = np.where(scale > 0, scale, 1.0)
        return replace(self, mean=mean, scale=scale)


def _mixture_means(components: int, dim: int, separation: float) -> np.ndarray:
    if components == 1:
        return np.zeros((1, dim))
    if dim == 1:
        means = np.arange(components, dtype=np.float64)[:, None] * separation
    elif components <= dim:
        # 缩放后的单纯形顶点，两两距离均为 separation
        means = np.zeros((components, dim))
        means[np.arange(components), np.arange(components)] = separation / math.sqrt(2.0)
    else:
        # 圆周上等距排列，相邻均值距离为 separation
        radius = separation / (2.0 * math.sin(math.pi / components))
        angles = 2.0 * math.pi * np.arange(components) / components
        means = np.zeros((components, dim))
        means[:, 0] = radius * np.cos(angles)
        means[:, 1] = radius * np.sin(angles)
    return means - means.mean(axis=0)


def make_gaussian_mixture(
    n: int,
    components: int,
    dim: int,
    separation: float,
    seed: int = 0,
    name: str = "gaussian_mixture",
) -> Dataset:
    """生成高斯混合数据集，样本按轮询方式分配到各成分.

    Args:
        n: 样本数
        components: 成分数
        dim: 维度
        separation: 均值间距
        seed: 随机种子
        name: 数据集名称

    Returns:
        Dataset: 已按全部样本标准化的数据集
    """
    if min(n, components, dim) < 1:
        raise InvalidArgumentError(f"n, components and dim must be >= 1, got n={n}, components={components}, dim={dim}")
    if not separation > 0:
        raise InvalidArgumentError(f"separation must be positive, got {separation}")
    means = _mixture_means(int(components), int(dim), float(separation))
    assignments = np.arange(n) % components
    rng = make_rng(seed, "gaussian-mixture")
    points = means[assignments] + rng.standard_normal((n, dim))
    params = {
        "n": int(n),
        "components": int(components),
        "dim": int(dim),
        "separation": float(separation),
        "means": means.tolist(),
    }
    logger.debug(f"Generated gaussian mixture: n={n}, components={components}, dim={dim}")
    return Dataset(name, DatasetKind.GAUSSIAN_MIXTURE, points, params, int(seed)).standardized()


def make_rings(
    n: int,
    radii: Sequence[float],
    dim: int = 2,
    noise: float = 0.1,
    seed: int = 0,
    name: str = "rings",
) -> Dataset:
    """生成同心圆环数据集：前两维为圆环，所有维度叠加高斯噪声."""
    if n < 1 or dim < 2:
        raise InvalidArgumentError(f"rings need n >= 1 and dim >= 2, got n={n}, dim={dim}")
    radii_arr = np.asarray(radii, dtype=np.float64)
    if radii_arr.ndim != 1 or radii_arr.size == 0 or np.any(radii_arr <= 0):
        raise InvalidArgumentError(f"radii must be a non-empty list of positive numbers, got {radii}")
    if noise < 0:
        raise InvalidArgumentError(f"noise must be non-negative, got {noise}")

    rng = make_rng(seed, "rings")
    ring = radii_arr[np.arange(n) % radii_arr.size]
    angles = rng.uniform(0.0, 2.0 * math.pi, size=n)
    points = noise * rng.standard_normal((n, dim))
    points[:, 0] += ring * np.cos(angles)
    points[:, 1] += ring * np.sin(angles)
    params = {"n": int(n), "radii": radii_arr.tolist(), "dim": int(dim), "noise": float(noise)}
    return Dataset(name, DatasetKind.RINGS, points, params, int(seed)).standardized()


@dataclass(frozen=True)
class SplitSpec:
    """成员 / 非成员划分与平衡查询集编号."""

    member_ids: Tuple[int, ...]
    nonmember_ids: Tuple[int, ...]
    query_member_ids: Tuple[int, ...]
    query_nonmember_ids: Tuple[int, ...]
    seed: int = 0

    def __post_init__(self):
        members, nonmembers = set(self.member_ids), set(self.nonmember_ids)
        if members & nonmembers:
            raise InvalidArgumentError("member and non-member pools overlap")
        if len(self.query_member_ids) != len(self.query_nonmember_ids):
            raise InvalidArgumentError("query set must be balanced")
        if not set(self.query_member_ids) <= members:
            raise InvalidArgumentError("query members must come from the member pool")
        if not set(self.query_nonmember_ids) <= nonmembers:
            raise InvalidArgumentError("query non-members must come from the non-member pool")

    def to_dict(self) -> dict:
        """转换为字典."""
        return {
            "member_ids": list(self.member_ids),
            "nonmember_ids": list(self.nonmember_ids),
            "query_member_ids": list(self.query_member_ids),
            "query_nonmember_ids": list(self.query_nonmember_ids),
            "seed": self.seed,
        }


def split(dataset: Dataset, member_count: int, query_size: int, seed: int = 0) -> SplitSpec:
    """随机划分成员 / 非成员池并抽取平衡查询集.

    Args:
        dataset: 数据集
        member_count: 成员数
        query_size: 查询集大小（偶数，一半成员一半非成员）
        seed: 划分种子

    Returns:
        SplitSpec: 划分结果
    """
    if member_count < 1:
        raise InvalidArgumentError(f"member_count must be positive, got {member_count}")
    if query_size < 2 or query_size % 2:
        raise InvalidArgumentError(f"query_size must be a positive even number, got {query_size}")
    half = query_size // 2
    if half > member_count:
        raise InvalidArgumentError(f"query_size/2 = {half} exceeds member_count = {member_count}")
    if member_count + half > dataset.n:
        raise InvalidArgumentError(
            f"dataset has {dataset.n} points, need member_count + query_size/2 = {member_count + half}"
        )

    rng = make_rng(seed, "split")
    order = rng.permutation(dataset.n)
    members = order[:member_count]
    nonmembers = order[member_count:]
    query_members = rng.choice(members, size=half, replace=False)
    query_nonmembers = rng.choice(nonmembers, size=half, replace=False)
    return SplitSpec(
        member_ids=tuple(int(i) for i in members),
        nonmember_ids=tuple(int(i) for i in nonmembers),
        query_member_ids=tuple(int(i) for i in query_members),
        query_nonmember_ids=tuple(int(i) for i in query_nonmembers),
        seed=int(seed),
    )


@dataclass(frozen=True)
class QuerySet:
    """攻击的查询集：样本编号、坐标与成员标签（1 = 成员）."""

    sample_ids: np.ndarray
    points: np.ndarray = field(repr=False)
    labels: np.ndarray

    def __post_init__(self):
        if not (len(self.sample_ids) == len(self.points) == len(self.labels)):
            raise InvalidArgumentError("query ids, points and labels must have the same length")

    def __len__(self) -> int:
        return len(self.sample_ids)

    @classmethod
    def from_split(cls, dataset: Dataset, split_spec: SplitSpec) -> "QuerySet":
        """成员在前、非成员在后组成查询集."""
        ids = np.array(split_spec.query_member_ids + split_spec.query_nonmember_ids, dtype=np.int64)
        labels = np.array(
            [1] * len(split_spec.query_member_ids) + [0] * len(split_spec.query_nonmember_ids), dtype=np.int64
        )
        return cls(sample_ids=ids, points=dataset.points[ids], labels=labels)


def make_dataset(spec, seed: int) -> Dataset:
    """按 ``DatasetSpec`` 生成数据集."""
    if DatasetKind(spec.kind) is DatasetKind.RINGS:
        return make_rings(spec.n, spec.radii, spec.dim, spec.noise, seed)
    return make_gaussian_mixture(spec.n, spec.components, spec.dim, spec.separation, seed)
