# retypelab/models/run.py - One CLI invocation in the run registry
from sqlalchemy import JSON, Column, DateTime, Float, Integer, String, Text
from sqlalchemy.orm import relationship
from sqlalchemy.sql import func

from retypelab.database import Base


class Run(Base):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    command = Column(String(20), nullable=False)
    status = Column(String(20), default="pending")
    seed = Column(String(32))
    config = Column(JSON, nullable=True)
    created_at = Column(DateTime(timezone=True), server_default=func.now())
    started_at = Column(DateTime(timezone=True))
    completed_at = Column(DateTime(timezone=True))
    duration_seconds = Column(Float, nullable=True)
    peak_rss_bytes = Column(Integer, nullable=True)
    error_message = Column(Text, nullable=True)

    logs = relationship("RunLog", back_populates="run", cascade="all, delete-orphan", order_by="RunLog.id")
