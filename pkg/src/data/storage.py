"""CSV / JSON 产物读写."""

import json
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.data.datasets import Dataset, SplitSpec
from src.diffusion.model import LossTrajectory
from src.enums import DatasetKind
from src.exceptions import ConfigError

PathLike = Union[str, Path]


def _coordinate_columns(dim: int) -> List[str]:
    return [f"x{i}" for i in range(dim)]


def _ensure_parent(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def metadata_path(path: PathLike) -> Path:
    """数据集 CSV 对应的元数据文件路径."""
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def save_dataset(dataset: Dataset, path: PathLike) -> Path:
    """保存数据集：原始坐标写 CSV，生成参数与标准化参数写入同名 .meta.json."""
    path = _ensure_parent(path)
    frame = pd.DataFrame(dataset.raw_points, columns=_coordinate_columns(dataset.dim))
    frame.to_csv(path, index=False, float_format="%.17g")
    meta = {
        "name": dataset.name,
        "kind": dataset.kind.value,
        "seed": dataset.seed,
        "generator_params": dataset.generator_params,
        "mean": None if dataset.mean is None else dataset.mean.tolist(),
        "scale": None if dataset.scale is None else dataset.scale.tolist(),
    }
    metadata_path(path).write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return path


def load_dataset(path: PathLike) -> Dataset:
    """读取 ``save_dataset`` 写出的数据集."""
    path = Path(path)
    meta_file = metadata_path(path)
    if not path.exists() or not meta_file.exists():
        raise ConfigError(f"dataset file or metadata missing: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    meta = json.loads(meta_file.read_text(encoding="utf-8"))
    return Dataset(
        name=meta["name"],
        kind=DatasetKind(meta["kind"]),
        raw_points=frame.to_numpy(dtype=np.float64),
        generator_params=meta.get("generator_params", {}),
        seed=int(meta.get("seed", 0)),
        mean=None if meta.get("mean") is None else np.asarray(meta["mean"], dtype=np.float64),
        scale=None if meta.get("scale") is None else np.asarray(meta["scale"], dtype=np.float64),
    )


def save_split(split_spec: SplitSpec, path: PathLike) -> Path:
    """保存成员划分."""
    path = _ensure_parent(path)
    path.write_text(json.dumps(split_spec.to_dict(), indent=2), encoding="utf-8")
    return path


def save_samples(points: np.ndarray, path: PathLike) -> Path:
    """保存生成样本."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    path = _ensure_parent(path)
    pd.DataFrame(points, columns=_coordinate_columns(points.shape[1])).to_csv(
        path, index=False, float_format="%.17g"
    )
    return path


def load_samples(path: PathLike) -> np.ndarray:
    """读取生成样本."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"sample file not found: {path}")
    return pd.read_csv(path, float_precision="round_trip").to_numpy(dtype=np.float64)


def save_loss_log(loss_log: Sequence[Tuple[int, float]], path: PathLike) -> Path:
    """保存训练损失日志 (step, loss)."""
    path = _ensure_parent(path)
    pd.DataFrame(list(loss_log), columns=["step", "loss"]).to_csv(path, index=False, float_format="%.17g")
    return path


def save_trajectories(trajectories: Iterable[LossTrajectory], path: PathLike) -> Path:
    """保存损失轨迹（长表：sample_id, kind, t, value, noise_draws）."""
    path = _ensure_parent(path)
    rows = [row for traj in trajectories for row in traj.to_rows()]
    frame = pd.DataFrame(rows, columns=["sample_id", "kind", "t", "value", "noise_draws"])
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    """写出任意表格."""
    path = _ensure_parent(path)
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def write_records(records: Sequence[dict], path: PathLike) -> Path:
    """写出 JSON 记录列表."""
    path = _ensure_parent(path)
    path.write_text(json.dumps(list(records), indent=2, default=str), encoding="utf-8")
    return path


def read_records(path: PathLike) -> List[dict]:
    """读取 JSON 记录列表."""
    return json.loads(Path(path).read_text(encoding="utf-8"))
