"""数据模型模块."""

from src.models.database import (
    Base,
    CellStatus,
    SweepCell,
    find_cell,
    get_db_session,
    init_database,
    registry_url,
    upsert_cell,
)

__all__ = [
    "Base",
    "CellStatus",
    "SweepCell",
    "find_cell",
    "get_db_session",
    "init_database",
    "registry_url",
    "upsert_cell",
]
