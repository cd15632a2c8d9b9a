"""扫描登记数据库：记录每个扫描单元的状态，用于断点续跑."""

import json
from datetime import datetime
from enum import Enum as PyEnum
from pathlib import Path
from typing import Dict, Generator, Optional, Union

from loguru import logger
from sqlalchemy import Column, DateTime, Float, Integer, String, Text, create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker

from src.config import get_settings

Base = declarative_base()


class CellStatus(str, PyEnum):
    """扫描单元状态."""

    PENDING = "pending"
    DONE = "done"
    FAILED = "failed"


class SweepCell(Base):
    """扫描单元记录."""

    __tablename__ = "sweep_cells"

    id = Column(Integer, primary_key=True, autoincrement=True)
    cell_hash = Column(String(32), unique=True, nullable=False, index=True)
    model_key = Column(String(100), nullable=False, index=True)
    axes = Column(Text, nullable=False)  # JSON 格式的轴取值
    status = Column(String(20), default=CellStatus.PENDING.value, nullable=False)
    error = Column(Text, nullable=True)
    auc = Column(Float, nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow, nullable=False)
    updated_at = Column(DateTime, default=datetime.utcnow, onupdate=datetime.utcnow, nullable=False)

    def __repr__(self) -> str:
        return f"<SweepCell(cell_hash='{self.cell_hash}', status='{self.status}')>"

    def get_axes(self) -> dict:
        """解析轴取值."""
        return json.loads(self.axes) if self.axes else {}

    def to_dict(self) -> dict:
        """转换为字典."""
        return {
            "cell_hash": self.cell_hash,
            "model_key": self.model_key,
            "axes": self.get_axes(),
            "status": self.status,
            "error": self.error,
            "auc": self.auc,
            "updated_at": self.updated_at.isoformat() if self.updated_at else None,
        }


# 每个输出目录一个引擎
_engines: Dict[str, Engine] = {}
_session_factories: Dict[str, sessionmaker] = {}


def registry_url(out_dir: Union[str, Path]) -> str:
    """输出目录对应的 sqlite 登记库地址."""
    path = Path(out_dir) / get_settings().registry_filename
    return f"sqlite:///{path.resolve()}"


def get_engine(url: str) -> Engine:
    """获取数据库引擎."""
    if url not in _engines:
        _engines[url] = create_engine(
            url,
            connect_args={"check_same_thread": False} if url.startswith("sqlite") else {},
        )
    return _engines[url]


def get_session_local(url: str) -> sessionmaker:
    """获取会话工厂."""
    if url not in _session_factories:
        _session_factories[url] = sessionmaker(autocommit=False, autoflush=False, bind=get_engine(url))
    return _session_factories[url]


def init_database(url: str) -> None:
    """初始化登记库."""
    logger.debug(f"Initializing sweep registry at {url}")
    Base.metadata.create_all(bind=get_engine(url))


def get_db_session(url: str) -> Generator[Session, None, None]:
    """获取数据库会话."""
    session = get_session_local(url)()
    try:
        yield session
        session.commit()
    except Exception:
        session.rollback()
        raise
    finally:
        session.close()


def find_cell(session: Session, cell_hash: str) -> Optional[SweepCell]:
    """按哈希查找扫描单元."""
    return session.query(SweepCell).filter(SweepCell.cell_hash == cell_hash).first()


def upsert_cell(
    session: Session,
    cell_hash: str,
    model_key: str,
    axes: dict,
    status: CellStatus,
    error: Optional[str] = None,
    auc: Optional[float] = None,
) -> SweepCell:
    """新建或更新扫描单元记录."""
    cell = find_cell(session, cell_hash)
    if cell is None:
        cell = SweepCell(cell_hash=cell_hash, model_key=model_key)
        session.add(cell)
    cell.axes = json.dumps(axes, sort_keys=True, default=str)
    cell.status = CellStatus(status).value
    cell.error = error
    cell.auc = auc
    cell.updated_at = datetime.utcnow()
    session.flush()
    return cell
