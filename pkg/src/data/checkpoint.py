"""模型检查点：自描述的二进制容器.

文件布局::

    b"DMIACKPT" | uint32 LE 头部长度 | JSON 头部 | α 表 (<f8) | 各参数 (<f4)

头部记录格式版本、数据维度、参数化方式、调度 {kind, T}、网络结构以及
按顺序排列的参数名与形状。
"""

import json
import struct
from pathlib import Path
from typing import List, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, ValidationError

from src.diffusion.model import DiffusionModel
from src.diffusion.network import DenseNet
from src.diffusion.schedule import NoiseSchedule
from src.enums import Activation, Parameterization, ScheduleKind
from src.exceptions import (
    CheckpointFormatError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    DiffMIAError,
)

MAGIC = b"DMIACKPT"
FORMAT_VERSION = 1
_LENGTH = struct.Struct("<I")
_SCHEDULE_DTYPE = np.dtype("<f8")
_PARAM_DTYPE = np.dtype("<f4")


class _HeaderModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ScheduleHeader(_HeaderModel):
    kind: ScheduleKind
    T: int


class NetworkHeader(_HeaderModel):
    layer_dims: List[int]
    time_embed_dim: int
    activation: Activation


class ArrayHeader(_HeaderModel):
    name: str
    shape: List[int]


class CheckpointHeader(_HeaderModel):
    """检查点头部."""

    format_version: int
    data_dim: int
    parameterization: Parameterization
    clamp: float
    schedule: ScheduleHeader
    network: NetworkHeader
    arrays: List[ArrayHeader]


def _expected_arrays(layer_dims: List[int]) -> List[ArrayHeader]:
    arrays = []
    for k, (fan_in, fan_out) in enumerate(zip(layer_dims[:-1], layer_dims[1:])):
        arrays.append(ArrayHeader(name=f"layers.{k}.weight", shape=[fan_in, fan_out]))
        arrays.append(ArrayHeader(name=f"layers.{k}.bias", shape=[fan_out]))
    return arrays


def encode_checkpoint(model: DiffusionModel) -> bytes:
    """把模型编码为检查点字节串."""
    net = model.net
    if not isinstance(net, DenseNet):
        raise CheckpointFormatError(f"only DenseNet models can be saved, got {type(net).__name__}")
    named = net.named_parameters()
    header = CheckpointHeader(
        format_version=FORMAT_VERSION,
        data_dim=net.data_dim,
        parameterization=model.parameterization,
        clamp=model.clamp,
        schedule=ScheduleHeader(kind=model.schedule.kind, T=model.T),
        network=NetworkHeader(
            layer_dims=net.layer_dims, time_embed_dim=net.embedding.dim, activation=net.activation
        ),
        arrays=[ArrayHeader(name=name, shape=list(p.shape)) for name, p in named.items()],
    )
    header_bytes = header.model_dump_json().encode("utf-8")
    parts = [MAGIC, _LENGTH.pack(len(header_bytes)), header_bytes]
    parts.append(np.ascontiguousarray(model.schedule.alphas, dtype=_SCHEDULE_DTYPE).tobytes())
    for p in named.values():
        parts.append(np.ascontiguousarray(p, dtype=_PARAM_DTYPE).tobytes())
    return b"".join(parts)


def decode_checkpoint(data: bytes) -> DiffusionModel:
    """解析检查点字节串，返回冻结的模型.

    Raises:
        CheckpointFormatError: 魔数、头部或版本不合法
        CheckpointTruncatedError: 文件被截断
        CheckpointShapeError: 参数形状与网络结构不符
    """
    prefix = MAGIC + bytes(_LENGTH.size)
    if len(data) < len(prefix):
        if data[: len(MAGIC)] != MAGIC[: len(data)]:
            raise CheckpointFormatError("not a diffmia checkpoint (bad magic)")
        raise CheckpointTruncatedError(f"checkpoint truncated inside the preamble ({len(data)} bytes)")
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError("not a diffmia checkpoint (bad magic)")

    (header_len,) = _LENGTH.unpack_from(data, len(MAGIC))
    offset = len(MAGIC) + _LENGTH.size
    if len(data) < offset + header_len:
        raise CheckpointTruncatedError("checkpoint truncated inside the header")
    raw_header = data[offset: offset + header_len]
    offset += header_len

    try:
        version = json.loads(raw_header.decode("utf-8")).get("format_version")
    except (UnicodeDecodeError, ValueError, AttributeError) as e:
        raise CheckpointFormatError(f"unreadable checkpoint header: {e}") from e
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}, expected {FORMAT_VERSION}")
    try:
        header = CheckpointHeader.model_validate_json(raw_header)
    except ValidationError as e:
        raise CheckpointFormatError(f"invalid checkpoint header: {e}") from e

    layer_dims = header.network.layer_dims
    if len(layer_dims) < 2 or layer_dims[-1] != header.data_dim:
        raise CheckpointShapeError(f"layer_dims {layer_dims} inconsistent with data_dim {header.data_dim}")
    expected = _expected_arrays(layer_dims)
    if [a.name for a in header.arrays] != [a.name for a in expected]:
        raise CheckpointShapeError("parameter names do not match the network layout")
    for stored, wanted in zip(header.arrays, expected):
        if stored.shape != wanted.shape:
            raise CheckpointShapeError(f"{stored.name}: stored shape {stored.shape}, network needs {wanted.shape}")

    schedule_bytes = (header.schedule.T + 1) * _SCHEDULE_DTYPE.itemsize
    param_sizes = [int(np.prod(a.shape)) * _PARAM_DTYPE.itemsize for a in header.arrays]
    needed = offset + schedule_bytes + sum(param_sizes)
    if len(data) < needed:
        raise CheckpointTruncatedError(f"checkpoint has {len(data)} bytes, expected {needed}")
    if len(data) > needed:
        raise CheckpointFormatError(f"{len(data) - needed} trailing bytes after the last array")

    alphas = np.frombuffer(data, dtype=_SCHEDULE_DTYPE, count=header.schedule.T + 1, offset=offset)
    offset += schedule_bytes
    params = []
    for stored, size in zip(header.arrays, param_sizes):
        count = size // _PARAM_DTYPE.itemsize
        arr = np.frombuffer(data, dtype=_PARAM_DTYPE, count=count, offset=offset).astype(np.float32)
        params.append(arr.reshape(stored.shape))
        offset += size

    try:
        schedule = NoiseSchedule.from_alphas(header.schedule.kind, alphas)
        net = DenseNet(
            layer_dims,
            params[0::2],
            params[1::2],
            header.network.time_embed_dim,
            header.network.activation,
        )
        model = DiffusionModel(net.freeze(), schedule, header.parameterization, header.clamp)
    except DiffMIAError as e:
        raise CheckpointFormatError(f"checkpoint content rejected: {e}") from e
    return model


def save_checkpoint(model: DiffusionModel, path: Union[str, Path]) -> Path:
    """保存检查点，父目录不存在时自动创建."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(model))
    logger.info(f"Saved checkpoint to {path} (T={model.T}, dim={model.data_dim})")
    return path


def load_checkpoint(path: Union[str, Path]) -> DiffusionModel:
    """读取检查点."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointFormatError(f"cannot read checkpoint {path}: {e}") from e
    model = decode_checkpoint(data)
    logger.debug(f"Loaded checkpoint {path}")
    return model
