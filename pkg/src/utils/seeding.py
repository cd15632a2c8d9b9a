"""确定性随机数派生."""

import zlib
from typing import Union

import numpy as np

SeedTag = Union[int, str]


def _tag_to_int(tag: SeedTag) -> int:
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    if tag < 0:
        raise ValueError(f"Seed tags must be non-negative, got {tag}")
    return int(tag)


def derive_seed(seed: int, *tags: SeedTag) -> int:
    """由全局种子和标签派生一个子种子.

    相同的 (seed, tags) 永远得到相同的结果，不同标签之间互不干扰。

    Args:
        seed: 全局种子
        tags: 标签（整数或字符串）

    Returns:
        int: 32 位子种子
    """
    sequence = np.random.SeedSequence([_tag_to_int(seed), *(_tag_to_int(t) for t in tags)])
    return int(sequence.generate_state(1)[0])


def make_rng(seed: int, *tags: SeedTag) -> np.random.Generator:
    """创建由 (seed, tags) 唯一确定的随机数生成器."""
    return np.random.default_rng(np.random.SeedSequence([_tag_to_int(seed), *(_tag_to_int(t) for t in tags)]))
