from functools import lru_cache
from typing import Iterator, Optional

from sqlalchemy.engine import Engine
from sqlmodel import Session, SQLModel, create_engine

from hodgedirac.core.config import get_settings


@lru_cache
def get_engine(database_url: Optional[str] = None) -> Engine:
    url = database_url or get_settings().database_url
    if not url:
        raise ValueError("No database URL configured (set HODGEDIRAC_DATABASE_URL or pass --db)")
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, connect_args=connect_args)


def create_db_and_tables(engine: Engine) -> None:
    # Import registers the table metadata
    from hodgedirac.models import models  # noqa: F401

    SQLModel.metadata.create_all(engine)


def get_session(engine: Engine) -> Iterator[Session]:
    with Session(engine) as session:
        yield session
