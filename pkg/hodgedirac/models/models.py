from datetime import datetime, timezone
from enum import Enum
from typing import List, Optional

from sqlmodel import Field, Relationship, SQLModel


class Domain(str, Enum):
    SQUARE = "square"
    DISK = "disk"
    ANNULUS = "annulus"
    EXTERNAL = "external"


class BoundaryCondition(str, Enum):
    NATURAL = "natural"
    ESSENTIAL = "essential"


class RunKind(str, Enum):
    CONVERGENCE = "convergence"
    CONSTANTS = "constants"


class StudyRun(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    kind: RunKind = Field(index=True)
    domain: Domain
    bc: BoundaryCondition
    problem: Optional[str] = None  # manufactured problem name, convergence only
    resolution: Optional[int] = None
    levels: Optional[int] = None
    created_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))

    # constants runs
    c_p: Optional[float] = None
    gamma_h: Optional[float] = None

    # convergence runs: observed rates on the finest level pair
    rate_errV_u: Optional[float] = None
    rate_err_du: Optional[float] = None

    level_results: List["LevelResult"] = Relationship(back_populates="run")


class LevelResult(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    run_id: int = Field(foreign_key="studyrun.id")
    level: int
    resolution: int
    h: float
    errW_u: float
    errV_u: float
    err_du: float
    err_p: float
    err_Bpart: float
    err_Bstarpart: float
    memory_mb: float = Field(default=0.0)

    run: Optional[StudyRun] = Relationship(back_populates="level_results")
