"""
Discrete Hodge-Dirac and Hodge-Laplace mixed problems on a GradedComplex.

Dirac: find (u, p) in W_h x h_h with
    (M D + D^T M) u + M H p = M f
    H^T M u                 = 0
Laplace (first row negated so the block matrix is symmetric):
    -M sigma + D^T M u             = 0
    M D sigma + D^T M D u + M H p  = M f
    H^T M u                        = 0
"""
import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from hodgedirac.core.config import get_settings
from hodgedirac.core.errors import SingularSystem, SolverFailure
from hodgedirac.services import linalg
from hodgedirac.services.complex import Cochain, GradedComplex
from hodgedirac.services.whitney import GradedForm, graded_load_vector

logger = logging.getLogger(__name__)

# Step two of the Laplace-via-Dirac construction must see no harmonic source
HARMONIC_LEAK_TOL = 1e-10
VIA_DIRAC_RESIDUAL_TOL = 1e-8

Source = Union[Cochain, GradedForm, np.ndarray]


@dataclass(frozen=True, eq=False)
class SaddleSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_u: int
    n_p: int


@dataclass(frozen=True, eq=False)
class DiracSolution:
    u: Cochain
    p: np.ndarray  # harmonic-basis coefficients
    residual: float
    load: np.ndarray  # <f, v> for every basis v, the first-block right-hand side


@dataclass(frozen=True, eq=False)
class LaplaceSolution:
    sigma: Cochain
    u: Cochain
    p: np.ndarray
    residual: float
    load: np.ndarray


def source_load(complex: GradedComplex, f: Source) -> np.ndarray:
    """M f for a cochain source, the graded load vector for an analytic one."""
    if isinstance(f, GradedForm):
        return graded_load_vector(complex.mesh, f, complex.bc)
    values = f.values if isinstance(f, Cochain) else np.asarray(f, dtype=float)
    if values.shape != (complex.size,):
        raise ValueError(f"source of length {values.shape} does not match complex size {complex.size}")
    return complex.M @ values


def harmonic_cochain(complex: GradedComplex, p: np.ndarray) -> Cochain:
    return complex.cochain(complex.harmonic_matrix @ np.asarray(p, dtype=float))


def _stack(blocks, sizes) -> sp.csr_matrix:
    keep = [i for i, n in enumerate(sizes) if n]
    if not keep:
        return sp.csr_matrix((0, 0))
    rows = []
    for a in keep:
        row = []
        for b in keep:
            block = blocks[a][b]
            row.append(sp.csr_matrix((sizes[a], sizes[b])) if block is None else sp.csr_matrix(block))
        rows.append(row)
    return sp.bmat(rows, format="csr")


def _relative(r: np.ndarray, load: np.ndarray) -> float:
    scale = float(np.linalg.norm(load))
    r_norm = float(np.linalg.norm(r))
    return r_norm / scale if scale > 0.0 else r_norm


def assemble_dirac_system(complex: GradedComplex, f: Source) -> SaddleSystem:
    M, D = complex.M, complex.D
    H = sp.csr_matrix(complex.harmonic_matrix)
    MD = M @ D
    MH = M @ H
    n_u, n_p = complex.size, H.shape[1]
    matrix = _stack([[MD + MD.T, MH], [MH.T, None]], [n_u, n_p])
    rhs = np.concatenate([source_load(complex, f), np.zeros(n_p)])
    logger.debug(f"Dirac saddle system {matrix.shape[0]}x{matrix.shape[0]}, nnz {matrix.nnz}")
    return SaddleSystem(matrix=matrix, rhs=rhs, n_u=n_u, n_p=n_p)


def dirac_residual(complex: GradedComplex, u: Cochain, p: np.ndarray, load: np.ndarray) -> float:
    """Relative residual of both Dirac equations, recomputed from scratch."""
    M, D = complex.M, complex.D
    Mu = M @ u.values
    MHp = M @ (complex.harmonic_matrix @ p)
    r1 = M @ (D @ u.values) + D.T @ Mu + MHp - load
    r2 = complex.harmonic_matrix.T @ Mu
    return _relative(np.concatenate([r1, r2]), load)


def laplace_residual(complex: GradedComplex, sigma: Cochain, u: Cochain, p: np.ndarray, load: np.ndarray) -> float:
    M, D = complex.M, complex.D
    Mu = M @ u.values
    r1 = M @ sigma.values - D.T @ Mu
    r2 = M @ (D @ sigma.values) + D.T @ (M @ (D @ u.values)) + M @ (complex.harmonic_matrix @ p) - load
    r3 = complex.harmonic_matrix.T @ Mu
    return _relative(np.concatenate([r1, r2, r3]), load)


def _solve(system: sp.csr_matrix, rhs: np.ndarray, tol: Optional[float], what: str) -> np.ndarray:
    try:
        return linalg.solve_symmetric_indefinite(system, rhs, tol=tol)
    except SingularSystem as e:
        logger.error(f"{what} system is singular; the harmonic basis is probably wrong")
        raise SolverFailure(f"{what} solve failed: {e}") from e


def _accept(residual: float, what: str) -> None:
    limit = get_settings().residual_tol
    if residual > limit:
        logger.error(f"{what} residual {residual:.3e} above {limit:.1e}")
        raise SolverFailure(f"{what} residual {residual:.3e} exceeds {limit:.1e}")
    logger.info(f"{what} solved, residual {residual:.3e}")


def solve_dirac(complex: GradedComplex, f: Source, tol: Optional[float] = None) -> DiracSolution:
    system = assemble_dirac_system(complex, f)
    x = _solve(system.matrix, system.rhs, tol, "Dirac")
    u = complex.cochain(x[: system.n_u])
    p = x[system.n_u :]
    load = system.rhs[: system.n_u]
    residual = dirac_residual(complex, u, p, load)
    _accept(residual, "Dirac")
    return DiracSolution(u=u, p=p, residual=residual, load=load)


def solve_laplace_mixed(complex: GradedComplex, f: Source, tol: Optional[float] = None) -> LaplaceSolution:
    M, D = complex.M, complex.D
    H = sp.csr_matrix(complex.harmonic_matrix)
    n, n_p = complex.size, H.shape[1]
    MD = M @ D
    MH = M @ H
    matrix = _stack(
        [
            [-M, MD.T, None],
            [MD, D.T @ MD, MH],
            [None, MH.T, None],
        ],
        [n, n, n_p],
    )
    load = source_load(complex, f)
    rhs = np.concatenate([np.zeros(n), load, np.zeros(n_p)])
    if n == 0:
        x = np.zeros(0)
    else:
        x = _solve(matrix, rhs, tol, "Mixed Laplace")
    sigma = complex.cochain(x[:n])
    u = complex.cochain(x[n : 2 * n])
    p = x[2 * n :]
    residual = laplace_residual(complex, sigma, u, p, load)
    _accept(residual, "Mixed Laplace")
    return LaplaceSolution(sigma=sigma, u=u, p=p, residual=residual, load=load)


def solve_laplace_via_dirac(complex: GradedComplex, f: Source, tol: Optional[float] = None) -> LaplaceSolution:
    """
    Hodge-Laplace by two Dirac solves: (w, p) from the source, then (u, 0)
    with w as source; returns (w - D u, u, p).
    """
    first = solve_dirac(complex, f, tol)
    w = first.u
    second = solve_dirac(complex, w, tol)

    w_norm = np.sqrt(max(complex.inner(w.values, w.values), 0.0))
    leak = float(np.linalg.norm(second.p))
    if leak > HARMONIC_LEAK_TOL * w_norm:
        raise SolverFailure(f"Second Dirac solve picked up a harmonic part {leak:.3e} (|w| = {w_norm:.3e})")

    u = second.u
    sigma = w - complex.cochain(complex.D @ u.values)
    residual = laplace_residual(complex, sigma, u, first.p, first.load)
    if residual > VIA_DIRAC_RESIDUAL_TOL:
        raise SolverFailure(f"Laplace-via-Dirac residual {residual:.3e} exceeds {VIA_DIRAC_RESIDUAL_TOL:.1e}")
    logger.info(f"Laplace via Dirac solved, residual {residual:.3e}")
    return LaplaceSolution(sigma=sigma, u=u, p=first.p, residual=residual, load=first.load)


def dirac_from_laplace(complex: GradedComplex, sol: LaplaceSolution) -> DiracSolution:
    """(sigma + D u, p) solves the Dirac problem with the same source."""
    u = sol.sigma + complex.cochain(complex.D @ sol.u.values)
    residual = dirac_residual(complex, u, sol.p, sol.load)
    return DiracSolution(u=u, p=sol.p.copy(), residual=residual, load=sol.load)
