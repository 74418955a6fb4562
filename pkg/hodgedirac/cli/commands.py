import logging
import math
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, Field, model_validator

from hodgedirac.core.config import get_settings
from hodgedirac.core.db import get_engine
from hodgedirac.models.models import BoundaryCondition, Domain
from hodgedirac.services import history, linalg
from hodgedirac.services.analysis import amplification, convergence_study, norms, stability_constants
from hodgedirac.services.complex import GradedComplex, build_complex, hodge_decompose
from hodgedirac.services.mesh import SimplicialMesh, generate_mesh, read_mesh, write_mesh
from hodgedirac.services.solvers import (
    harmonic_cochain,
    solve_dirac,
    solve_laplace_mixed,
    solve_laplace_via_dirac,
)
from hodgedirac.services.whitney import AnalyticForm, GradedForm, graded_de_rham_map
from hodgedirac.cli.expression import compile_expression
from hodgedirac.cli.writers import cochain_fields, merge_fields, write_text, write_vtk

logger = logging.getLogger(__name__)

DEMO_F0 = "0"
DEMO_F2 = "x*y"


class Subcommand(str, Enum):
    MESH = "mesh"
    SOLVE_DIRAC = "solve-dirac"
    SOLVE_LAPLACE = "solve-laplace"
    DECOMPOSE = "decompose"
    CONSTANTS = "constants"
    CONVERGENCE = "convergence"
    DEMO_DISK = "demo-disk"
    HISTORY = "history"


class RunConfig(BaseModel):
    subcommand: Subcommand
    domain: Optional[Domain] = None
    resolution: int = Field(default=4, ge=1)
    levels: int = Field(default=4, ge=1)
    bc: BoundaryCondition = BoundaryCondition.NATURAL
    f0: Optional[str] = None
    f1x: Optional[str] = None
    f1y: Optional[str] = None
    f2: Optional[str] = None
    mesh: Optional[Path] = None
    out: Optional[Path] = None
    tol: Optional[float] = Field(default=None, gt=0)
    via_dirac: bool = False
    problem: str = "smooth1"
    seed: int = 0
    db: Optional[str] = None
    limit: int = Field(default=20, ge=1)
    verbose: bool = False

    @model_validator(mode="after")
    def check_consistency(self) -> "RunConfig":
        if (self.f1x is None) != (self.f1y is None):
            raise ValueError("--f1x and --f1y must be given together")
        if self.mesh is not None and self.domain is not None:
            raise ValueError("--mesh and --domain are mutually exclusive")
        if self.domain == Domain.EXTERNAL:
            raise ValueError("domain 'external' is only for meshes read with --mesh")
        if self.subcommand == Subcommand.CONVERGENCE:
            if self.levels < 2:
                raise ValueError("convergence needs --levels >= 2")
            if self.mesh is not None:
                raise ValueError("convergence generates its own meshes; --mesh is not allowed")
        if self.subcommand in (Subcommand.MESH, Subcommand.DEMO_DISK) and self.mesh is not None:
            raise ValueError(f"{self.subcommand.value} does not read a mesh")
        if self.subcommand == Subcommand.DEMO_DISK and self.domain not in (None, Domain.DISK):
            raise ValueError("demo-disk always runs on the disk")
        return self

    @property
    def resolved_domain(self) -> Domain:
        return self.domain or Domain.SQUARE

    def source_form(self) -> GradedForm:
        """The graded source assembled from --f0, --f1x/--f1y, --f2 (missing parts are zero)."""
        zero = AnalyticForm(0, compile_expression(self.f0)) if self.f0 else None
        two = AnalyticForm(2, compile_expression(self.f2)) if self.f2 else None
        one = None
        if self.f1x:
            fx = compile_expression(self.f1x)
            fy = compile_expression(self.f1y)
            one = AnalyticForm(1, lambda x, y: (fx(x, y), fy(x, y)))
        return GradedForm(zero=zero, one=one, two=two)


def _mesh(config: RunConfig) -> SimplicialMesh:
    if config.mesh is not None:
        return read_mesh(config.mesh)
    return generate_mesh(config.resolved_domain, config.resolution)


def _out(config: RunConfig, default: str) -> Path:
    return config.out if config.out is not None else Path(default)


def _recording(config: RunConfig) -> bool:
    return bool(config.db or get_settings().database_url)


def _report_norms(complex: GradedComplex, name: str, x) -> None:
    w, v = norms(complex, x)
    print(f"{name}: |.|_W = {w:.17g}, |.|_V = {v:.17g}")


def cmd_mesh(config: RunConfig) -> int:
    mesh = _mesh(config)
    path = _out(config, f"{config.resolved_domain.value}-{config.resolution}.mesh")
    write_mesh(mesh, path)
    V, E, F = mesh.counts
    print(f"mesh: V={V} E={E} F={F} chi={mesh.euler_characteristic} -> {path}")
    return 0


def cmd_solve_dirac(config: RunConfig) -> int:
    f = config.source_form()
    complex = build_complex(_mesh(config), config.bc)
    sol = solve_dirac(complex, f, config.tol)
    path = _out(config, "solve-dirac.vtk")
    fields = merge_fields(cochain_fields(sol.u, "u"), cochain_fields(harmonic_cochain(complex, sol.p), "p"))
    write_vtk(path, complex.mesh, f"Hodge-Dirac solution ({config.bc.value})", **fields)
    print(f"residual: {sol.residual:.3e}")
    _report_norms(complex, "u_h", sol.u)
    print(f"p_h coefficients: {' '.join(format(c, '.17g') for c in sol.p)}")
    print(f"wrote {path}")
    return 0


def cmd_solve_laplace(config: RunConfig) -> int:
    f = config.source_form()
    complex = build_complex(_mesh(config), config.bc)
    solve = solve_laplace_via_dirac if config.via_dirac else solve_laplace_mixed
    sol = solve(complex, f, config.tol)
    path = _out(config, "solve-laplace.vtk")
    fields = merge_fields(
        cochain_fields(sol.sigma, "sigma"),
        cochain_fields(sol.u, "u"),
        cochain_fields(harmonic_cochain(complex, sol.p), "p"),
    )
    method = "via Dirac" if config.via_dirac else "mixed"
    write_vtk(path, complex.mesh, f"Hodge-Laplace solution ({method}, {config.bc.value})", **fields)
    print(f"residual: {sol.residual:.3e} ({method})")
    _report_norms(complex, "sigma_h", sol.sigma)
    _report_norms(complex, "u_h", sol.u)
    print(f"wrote {path}")
    return 0


def cmd_decompose(config: RunConfig) -> int:
    form = config.source_form()
    complex = build_complex(_mesh(config), config.bc)
    x = complex.cochain(graded_de_rham_map(complex.mesh, form, config.bc))
    parts = hodge_decompose(complex, x, config.tol)
    path = _out(config, "decompose.vtk")
    fields = merge_fields(
        cochain_fields(parts.b_part, "exact"),
        cochain_fields(parts.h_part, "harmonic"),
        cochain_fields(parts.bstar_part, "coexact"),
    )
    write_vtk(path, complex.mesh, f"Hodge decomposition ({config.bc.value})", **fields)
    residual = linalg.residual_norm(
        sp.identity(complex.size), parts.b_part.values + parts.h_part.values + parts.bstar_part.values, x.values
    )
    print(f"residual: {residual:.3e}")
    for name, part in (("exact", parts.b_part), ("harmonic", parts.h_part), ("coexact", parts.bstar_part)):
        _report_norms(complex, name, part)
    print(f"wrote {path}")
    return 0


def cmd_constants(config: RunConfig) -> int:
    complex = build_complex(_mesh(config), config.bc)
    constants = stability_constants(complex)
    print(f"c_P = {constants.c_P:.17g}")
    print(f"gamma_h = {constants.gamma_h:.17g}")
    print(f"gamma_h*c_P^2 = {constants.ratio:.17g}")
    amp = amplification(complex, rng=np.random.default_rng(config.seed), tol=config.tol)
    print(f"amplification = {amp.product:.17g} (1/gamma_h = {1 / constants.gamma_h:.17g})")
    print(f"amplification sum = {amp.total:.17g} (sqrt(2)/gamma_h = {math.sqrt(2) / constants.gamma_h:.17g})")
    print(f"residual: {amp.residual:.3e}")
    if _recording(config):
        run = history.record_constants(constants, get_engine(config.db))
        print(f"recorded run {run.id}")
    return 0


def cmd_convergence(config: RunConfig) -> int:
    report = convergence_study(
        config.resolved_domain,
        config.bc,
        config.problem,
        config.levels,
        base_resolution=config.resolution,
        tol=config.tol,
    )
    csv = report.to_csv()
    if config.out is not None:
        write_text(config.out, csv)
    else:
        print(csv, end="")
    worst = max(rec.residual for rec in report.levels)
    logger.info(f"Largest Dirac residual over levels: {worst:.3e}")
    if _recording(config):
        run = history.record_convergence(report, get_engine(config.db))
        logger.info(f"Recorded run {run.id}")
    return 0


def weak_divergence_residual(complex: GradedComplex, u1: np.ndarray) -> float:
    """max over 0-forms v of <u, dv> / |v|_V, as sqrt(g^T (M0 + D0^T M1 D0)^-1 g), g = D0^T M1 u."""
    if complex.dims[0] == 0:
        return 0.0
    M0, M1 = complex.masses[0], complex.masses[1]
    g = complex.d0.T @ (M1 @ u1)
    gram = M0 + complex.d0.T @ M1 @ complex.d0
    y = linalg.solve_symmetric_indefinite(gram, g)
    return math.sqrt(max(float(g @ y), 0.0))


def cmd_demo_disk(config: RunConfig) -> int:
    f0 = config.f0 or DEMO_F0
    f2 = config.f2 or DEMO_F2
    form = GradedForm(zero=AnalyticForm(0, compile_expression(f0)), two=AnalyticForm(2, compile_expression(f2)))
    out_dir = _out(config, ".")
    mesh = generate_mesh(Domain.DISK, config.resolution)
    for bc in (BoundaryCondition.NATURAL, BoundaryCondition.ESSENTIAL):
        complex = build_complex(mesh, bc)
        sol = solve_dirac(complex, form, config.tol)
        u = sol.u
        total = max(norms(complex, u)[0], np.finfo(float).tiny)
        comp0 = math.sqrt(max(float(u.component(0) @ (complex.masses[0] @ u.component(0))), 0.0))
        comp2 = math.sqrt(max(float(u.component(2) @ (complex.masses[2] @ u.component(2))), 0.0))
        H = complex.harmonic_matrix
        constraint = float(np.max(np.abs(H.T @ (complex.M @ u.values)))) if H.shape[1] else 0.0
        divergence = weak_divergence_residual(complex, u.component(1))

        path = write_vtk(
            out_dir / f"demo-disk-{bc.value}.vtk",
            mesh,
            f"u with d*u = -div u = {f0}, curl u = {f2} on the unit disk ({bc.value} BC)",
            **cochain_fields(u, "u"),
        )
        print(f"[{bc.value}] residual: {sol.residual:.3e}")
        print(f"[{bc.value}] |u_0|/|u| = {comp0 / total:.3e}, |u_2|/|u| = {comp2 / total:.3e}")
        print(f"[{bc.value}] harmonic constraint = {constraint:.3e}, weak divergence residual = {divergence:.3e}")
        print(f"[{bc.value}] wrote {path}")
    return 0


def cmd_history(config: RunConfig) -> int:
    runs = history.list_runs(config.limit, get_engine(config.db))
    for run in runs:
        detail = (
            f"c_P={run.c_p:.6g} gamma_h={run.gamma_h:.6g}"
            if run.kind.value == "constants"
            else f"problem={run.problem} levels={run.levels} rate_errV_u={run.rate_errV_u}"
        )
        print(f"{run.id} {run.created_at:%Y-%m-%d %H:%M:%S} {run.kind.value} {run.domain.value} {run.bc.value} {detail}")
    if not runs:
        print("no recorded runs")
    return 0


COMMANDS = {
    Subcommand.MESH: cmd_mesh,
    Subcommand.SOLVE_DIRAC: cmd_solve_dirac,
    Subcommand.SOLVE_LAPLACE: cmd_solve_laplace,
    Subcommand.DECOMPOSE: cmd_decompose,
    Subcommand.CONSTANTS: cmd_constants,
    Subcommand.CONVERGENCE: cmd_convergence,
    Subcommand.DEMO_DISK: cmd_demo_disk,
    Subcommand.HISTORY: cmd_history,
}


def run(config: RunConfig) -> int:
    logger.debug(f"Running {config.subcommand.value} with {config.model_dump(exclude_none=True)}")
    return COMMANDS[config.subcommand](config)
