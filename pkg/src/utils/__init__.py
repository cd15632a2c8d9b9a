"""工具模块."""

from src.utils.logger import setup_logger
from src.utils.seeding import derive_seed, make_rng

__all__ = ["setup_logger", "derive_seed", "make_rng"]
