# retypelab/database.py - Run registry engine and sessions
from typing import Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import declarative_base, sessionmaker

from retypelab.core.config import settings

Base = declarative_base()

SessionLocal = sessionmaker(autocommit=False, autoflush=False)


def make_engine(url: Optional[str] = None) -> Engine:
    url = url or settings.DATABASE_URL
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, echo=settings.DEBUG, pool_pre_ping=True, connect_args=connect_args)


def init_db(url: Optional[str] = None) -> Engine:
    """Create the registry tables and bind SessionLocal to the engine."""
    # importing the models registers their tables on Base
    from retypelab import models  # noqa: F401

    engine = make_engine(url)
    Base.metadata.create_all(bind=engine)
    SessionLocal.configure(bind=engine)
    return engine
