"""日志配置."""

import sys
from pathlib import Path
from typing import Optional

from loguru import logger

from src.config import get_settings

LOG_FILE_NAME = "diffmia.log"

CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<magenta>{thread.name}</magenta> | <cyan>{name}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {thread.name} | {name}:{function}:{line} - {message}"


def setup_logger(level: Optional[str] = None, log_dir: Optional[str] = None):
    """配置日志.

    控制台输出走 stderr，stdout 留给命令结果（报告表等）。扫描在线程池中运行，
    两个处理器的格式都带线程名。

    Args:
        level: 日志级别，缺省时取 ``DIFFMIA_LOG_LEVEL``
        log_dir: 日志目录，缺省时取 ``DIFFMIA_LOG_DIR``

    Returns:
        配置好的 loguru logger
    """
    settings = get_settings()
    level = (level or settings.log_level).upper()

    logger.remove()
    logger.add(sys.stderr, level=level, format=CONSOLE_FORMAT)

    directory = Path(log_dir or settings.log_dir)
    directory.mkdir(parents=True, exist_ok=True)
    logger.add(
        directory / LOG_FILE_NAME,
        level=level,
        format=FILE_FORMAT,
        rotation="1 day",
        retention="7 days",
        encoding="utf-8",
    )
    logger.debug(f"Logging to {directory / LOG_FILE_NAME} at level {level}")
    return logger
