import logging
import math
from typing import List, Optional

from sqlalchemy.engine import Engine
from sqlmodel import Session, select

from hodgedirac.core.db import create_db_and_tables, get_engine
from hodgedirac.models.models import LevelResult, RunKind, StudyRun
from hodgedirac.services.analysis import ConvergenceReport, StabilityConstants

logger = logging.getLogger(__name__)


def _engine(engine: Optional[Engine]) -> Engine:
    engine = engine or get_engine()
    create_db_and_tables(engine)
    return engine


def _finite(value: float) -> Optional[float]:
    return value if value is not None and math.isfinite(value) else None


def record_convergence(report: ConvergenceReport, engine: Optional[Engine] = None) -> StudyRun:
    engine = _engine(engine)
    rates = report.final_rates
    with Session(engine) as session:
        run = StudyRun(
            kind=RunKind.CONVERGENCE,
            domain=report.domain,
            bc=report.bc,
            problem=report.problem,
            resolution=report.levels[0].resolution if report.levels else None,
            levels=len(report.levels),
            rate_errV_u=_finite(rates["errV_u"]),
            rate_err_du=_finite(rates["err_du"]),
        )
        session.add(run)
        session.commit()
        session.refresh(run)

        for rec in report.levels:
            session.add(
                LevelResult(
                    run_id=run.id,
                    level=rec.level,
                    resolution=rec.resolution,
                    h=rec.h,
                    errW_u=rec.errW_u,
                    errV_u=rec.errV_u,
                    err_du=rec.err_du,
                    err_p=rec.err_p,
                    err_Bpart=rec.err_Bpart,
                    err_Bstarpart=rec.err_Bstarpart,
                    memory_mb=rec.memory_mb,
                )
            )
        session.commit()
        session.refresh(run)
        logger.info(f"Recorded convergence run {run.id} ({len(report.levels)} levels)")
        return run


def record_constants(constants: StabilityConstants, engine: Optional[Engine] = None) -> StudyRun:
    engine = _engine(engine)
    with Session(engine) as session:
        run = StudyRun(
            kind=RunKind.CONSTANTS,
            domain=constants.domain,
            bc=constants.bc,
            resolution=constants.resolution,
            c_p=constants.c_P,
            gamma_h=constants.gamma_h,
        )
        session.add(run)
        session.commit()
        session.refresh(run)
        logger.info(f"Recorded constants run {run.id}")
        return run


def list_runs(limit: int = 20, engine: Optional[Engine] = None) -> List[StudyRun]:
    """Most recent runs first."""
    engine = _engine(engine)
    with Session(engine) as session:
        query = select(StudyRun).order_by(StudyRun.created_at.desc(), StudyRun.id.desc()).limit(limit)
        return list(session.exec(query).all())


def level_results(run_id: int, engine: Optional[Engine] = None) -> List[LevelResult]:
    engine = _engine(engine)
    with Session(engine) as session:
        query = select(LevelResult).where(LevelResult.run_id == run_id).order_by(LevelResult.level)
        return list(session.exec(query).all())
