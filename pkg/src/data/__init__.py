"""数据集、检查点与产物存储."""

from src.data.checkpoint import load_checkpoint, save_checkpoint
from src.data.datasets import (
    Dataset,
    QuerySet,
    SplitSpec,
    make_dataset,
    make_gaussian_mixture,
    make_rings,
    split,
)

__all__ = [
    "Dataset",
    "QuerySet",
    "SplitSpec",
    "load_checkpoint",
    "make_dataset",
    "make_gaussian_mixture",
    "make_rings",
    "save_checkpoint",
    "split",
]
