from sqlalchemy import Column, DateTime, Enum as SQLEnum, Integer, JSON, String, Text
from sqlalchemy.sql import func

from inffusion.db.base import Base
from inffusion.schemas.reports import RunStatus


class Run(Base):
    """One CLI invocation (simulate, train, eval, ablate)"""
    __tablename__ = "runs"

    id = Column(String(36), primary_key=True)
    command = Column(String(32), nullable=False, index=True)
    status = Column(SQLEnum(RunStatus), nullable=False, default=RunStatus.QUEUED)
    seed = Column(Integer, nullable=True)
    out_dir = Column(Text, nullable=True)
    config = Column(JSON, nullable=True)  # config snapshot
    created_at = Column(DateTime(timezone=True), server_default=func.now())
    updated_at = Column(DateTime(timezone=True), server_default=func.now(), onupdate=func.now())
    error_code = Column(String(100), nullable=True)
    error_message = Column(Text, nullable=True)


class RunArtifact(Base):
    """Manifest and report produced by a run"""
    __tablename__ = "run_artifacts"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(String(36), nullable=False, index=True)
    manifest = Column(JSON, nullable=True)
    report = Column(JSON, nullable=True)  # metrics or ablation tables
    generated_at = Column(DateTime(timezone=True), server_default=func.now())
