"""
Measurement harness: norms, discrete Poincare and inf-sup constants,
best-approximation errors and convergence studies on refinement sequences.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import psutil
import scipy.sparse as sp

from hodgedirac.core.config import get_settings
from hodgedirac.core.errors import EmptyComplement, LinalgError, SolverFailure
from hodgedirac.models.models import BoundaryCondition, Domain
from hodgedirac.services import linalg
from hodgedirac.services.complex import Cochain, GradedComplex, build_complex, hodge_decompose
from hodgedirac.services.mesh import generate_mesh, mesh_size
from hodgedirac.services.problems import ManufacturedProblem, get_problem
from hodgedirac.services.solvers import assemble_dirac_system, solve_dirac
from hodgedirac.services.whitney import AnalyticForm, GradedForm, graded_de_rham_map, l2_error, load_vector

logger = logging.getLogger(__name__)

METHODS = ("auto", "dense", "sparse")

# Generalized eigenvalues below this fraction of the largest count as zero
ZERO_EIG_REL = 1e-8

CSV_COLUMNS = ("h", "errW_u", "errV_u", "err_du", "err_p", "err_Bpart", "err_Bstarpart")


def norms(complex: GradedComplex, x: Cochain) -> Tuple[float, float]:
    """(W-norm, V-norm) of a cochain."""
    w2 = complex.inner(x.values, x.values)
    dx = complex.D @ x.values
    d2 = complex.inner(dx, dx)
    return math.sqrt(max(w2, 0.0)), math.sqrt(max(w2 + d2, 0.0))


def _use_dense(complex: GradedComplex, method: str) -> bool:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    if method == "auto":
        return complex.size + complex.harmonic.total <= get_settings().dense_eig_limit
    return method == "dense"


def poincare_constant(complex: GradedComplex, method: str = "auto") -> float:
    """
    c_P = sqrt(1 + 1/lambda_min), lambda_min the smallest positive eigenvalue
    of D^T M D against M (attained on the complement of ker D).
    """
    if _use_dense(complex, method):
        A = complex.D.T @ complex.M @ complex.D
        w, _ = linalg.generalized_symmetric_eig(A, complex.M)
        if w.size == 0 or w[-1] <= 0.0:
            raise EmptyComplement("ker D is the whole space; the Poincare constant is undefined")
        positive = w[w > ZERO_EIG_REL * w[-1]]
        lam_min = float(positive[0])
    else:
        lam_min = _poincare_sparse(complex)
    c_p = math.sqrt(1.0 + 1.0 / lam_min)
    logger.info(f"Poincare constant {c_p:.6g} (lambda_min {lam_min:.6g}, {complex.size} unknowns)")
    return c_p


def _poincare_sparse(complex: GradedComplex) -> float:
    # Eigenvalues of the Dirac pencil are +-sqrt(mu) for the Laplace eigenvalues mu,
    # plus a +-1 pair per harmonic basis vector (those carry half their mass in p)
    system = assemble_dirac_system(complex, np.zeros(complex.size))
    n_p = system.n_p
    N = sp.block_diag([complex.M, sp.identity(n_p)], format="csr") if n_p else complex.M
    k = min(2 * n_p + 2, system.matrix.shape[0] - 1)
    if k < 1:
        raise EmptyComplement("complex too small for a sparse Poincare estimate")
    w, v = linalg.smallest_magnitude_eig(system.matrix, N, k)
    p_mass = np.sum(v[system.n_u :] ** 2, axis=0) if n_p else np.zeros(len(w))
    dirac = np.abs(w[p_mass < 0.25])
    if dirac.size == 0:
        raise EmptyComplement("no eigenvalue of the Dirac pencil outside the harmonic block")
    return float(dirac.min() ** 2)


def infsup_constant(complex: GradedComplex, method: str = "auto") -> float:
    """
    gamma_h = min |lambda| of G x = lambda N x, with G the Dirac saddle matrix
    and N = blockdiag(M + D^T M D, H^T M H).
    """
    system = assemble_dirac_system(complex, np.zeros(complex.size))
    M, D = complex.M, complex.D
    V_gram = M + D.T @ M @ D
    blocks = [V_gram]
    if system.n_p:
        H = complex.harmonic_matrix
        blocks.append(sp.csr_matrix(H.T @ (M @ H)))
    N = sp.block_diag(blocks, format="csr")
    try:
        if _use_dense(complex, method):
            w, _ = linalg.generalized_symmetric_eig(system.matrix, N)
        else:
            w, _ = linalg.smallest_magnitude_eig(system.matrix, N, k=2)
    except LinalgError as e:
        raise SolverFailure(f"Inf-sup eigenproblem failed: {e}") from e
    gamma = float(np.min(np.abs(w)))
    logger.info(f"Inf-sup constant {gamma:.6g} ({system.matrix.shape[0]} unknowns)")
    return gamma


@dataclass(frozen=True)
class StabilityConstants:
    c_P: float
    gamma_h: float
    domain: Domain
    bc: BoundaryCondition
    resolution: Optional[int]
    n_unknowns: int

    @property
    def ratio(self) -> float:
        """gamma_h * c_P^2, compared against the lower bound of the continuous argument."""
        return self.gamma_h * self.c_P**2


def stability_constants(complex: GradedComplex, method: str = "auto") -> StabilityConstants:
    return StabilityConstants(
        c_P=poincare_constant(complex, method),
        gamma_h=infsup_constant(complex, method),
        domain=complex.mesh.domain,
        bc=complex.bc,
        resolution=complex.mesh.resolution,
        n_unknowns=complex.size,
    )


@dataclass(frozen=True)
class Amplification:
    """Worst ratios over the sampled sources f with ||f||_W = 1."""

    product: float  # sqrt(||u_h||_V^2 + ||p_h||^2), bounded by 1/gamma_h
    total: float  # ||u_h||_V + ||p_h||, bounded by sqrt(2)/gamma_h
    residual: float  # largest Dirac residual of the sampled solves


def amplification(
    complex: GradedComplex,
    samples: int = 20,
    rng: Optional[np.random.Generator] = None,
    tol: Optional[float] = None,
) -> Amplification:
    rng = np.random.default_rng(0) if rng is None else rng
    product = total = residual = 0.0
    for _ in range(samples):
        f = complex.cochain(rng.standard_normal(complex.size))
        f = f * (1.0 / norms(complex, f)[0])
        sol = solve_dirac(complex, f, tol)
        u_norm = norms(complex, sol.u)[1]
        p_norm = float(np.linalg.norm(sol.p))
        product = max(product, math.hypot(u_norm, p_norm))
        total = max(total, u_norm + p_norm)
        residual = max(residual, sol.residual)
    return Amplification(product=product, total=total, residual=residual)


def best_approx_error(complex: GradedComplex, w: AnalyticForm) -> float:
    """E(w): L2 distance from w to its M-orthogonal projection onto the degree-k Whitney space."""
    k = w.degree
    mesh, bc = complex.mesh, complex.bc
    if complex.dims[k] == 0:
        return l2_error(mesh, k, None, w, bc)
    rhs = load_vector(mesh, k, w, bc)
    coeffs = linalg.solve_symmetric_indefinite(complex.masses[k], rhs)
    return l2_error(mesh, k, coeffs, w, bc)


def graded_l2_error(complex: GradedComplex, x: Optional[np.ndarray], exact: GradedForm) -> float:
    total = 0.0
    for k in range(3):
        values = None if x is None else x[complex.block(k)]
        total += l2_error(complex.mesh, k, values, exact.component(k), complex.bc) ** 2
    return math.sqrt(total)


def observed_rates(hs: Sequence[float], errors: Sequence[float]) -> List[float]:
    """log(e_i / e_i+1) / log(h_i / h_i+1) per consecutive level pair; nan where undefined."""
    rates = []
    for i in range(len(hs) - 1):
        e0, e1 = errors[i], errors[i + 1]
        if e0 > 0 and e1 > 0 and hs[i] != hs[i + 1]:
            rates.append(math.log(e0 / e1) / math.log(hs[i] / hs[i + 1]))
        else:
            rates.append(float("nan"))
    return rates


@dataclass(frozen=True)
class LevelRecord:
    level: int
    resolution: int
    h: float
    errW_u: float
    errV_u: float
    err_du: float
    err_p: float
    err_Bpart: float
    err_Bstarpart: float
    residual: float
    n_unknowns: int
    memory_mb: float = 0.0

    def row(self) -> Tuple[float, ...]:
        return tuple(getattr(self, name) for name in CSV_COLUMNS)


@dataclass
class ConvergenceReport:
    domain: Domain
    bc: BoundaryCondition
    problem: str
    levels: List[LevelRecord] = field(default_factory=list)

    def column(self, name: str) -> List[float]:
        return [getattr(rec, name) for rec in self.levels]

    def rates(self, name: str) -> List[float]:
        return observed_rates(self.column("h"), self.column(name))

    @property
    def final_rates(self) -> dict:
        """Rates on the finest level pair, per error column."""
        return {name: (self.rates(name)[-1] if len(self.levels) > 1 else float("nan")) for name in CSV_COLUMNS[1:]}

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for rec in self.levels:
            lines.append(",".join(format(value, ".17g") for value in rec.row()))
        lines.append(",".join(["rates"] + [format(r, ".17g") for r in self.final_rates.values()]))
        return "\n".join(lines) + "\n"


def _memory_mb() -> float:
    return psutil.Process().memory_info().rss / (1024 * 1024)


def run_level(problem: ManufacturedProblem, resolution: int, level: int = 0, tol: Optional[float] = None) -> LevelRecord:
    mesh = generate_mesh(problem.domain, resolution)
    complex = build_complex(mesh, problem.bc)
    sol = solve_dirac(complex, problem.f, tol)
    u_h = sol.u.values

    errW = graded_l2_error(complex, u_h, problem.u)
    err_du = graded_l2_error(complex, complex.D @ u_h, problem.du)
    errV = math.sqrt(errW**2 + err_du**2)
    err_p = graded_l2_error(complex, complex.harmonic_matrix @ sol.p, problem.p)

    interpolated = graded_de_rham_map(mesh, problem.u, problem.bc)
    parts = hodge_decompose(complex, complex.cochain(interpolated - u_h), tol)
    err_B = norms(complex, parts.b_part)[0]
    err_Bstar = norms(complex, parts.bstar_part)[0]

    record = LevelRecord(
        level=level,
        resolution=resolution,
        h=mesh_size(mesh),
        errW_u=errW,
        errV_u=errV,
        err_du=err_du,
        err_p=err_p,
        err_Bpart=err_B,
        err_Bstarpart=err_Bstar,
        residual=sol.residual,
        n_unknowns=complex.size,
        memory_mb=_memory_mb(),
    )
    logger.info(
        f"Level {level} (n={resolution}, h={record.h:.4g}): errV {errV:.4e}, errW {errW:.4e}, "
        f"err_du {err_du:.4e}, err_p {err_p:.4e}, RSS {record.memory_mb:.1f} MB"
    )
    return record


def convergence_study(
    domain: Domain,
    bc: BoundaryCondition,
    problem: Union[str, ManufacturedProblem],
    levels: int,
    base_resolution: Optional[int] = None,
    tol: Optional[float] = None,
) -> ConvergenceReport:
    if levels < 1:
        raise ValueError("levels must be at least 1")
    if isinstance(problem, str):
        problem = get_problem(problem, domain, bc)
    base = get_settings().base_resolution if base_resolution is None else base_resolution
    report = ConvergenceReport(domain=Domain(domain), bc=BoundaryCondition(bc), problem=problem.name)
    for level in range(levels):
        report.levels.append(run_level(problem, base * 2**level, level, tol))
    logger.info(f"Convergence study '{problem.name}' done: final rates {report.final_rates}")
    return report
