"""
The discrete graded complex (W_h, d_h): block coboundary D over degrees
0, 1, 2, block-diagonal Whitney mass matrix M, harmonic spaces, the
discrete Hodge decomposition and the discrete Hodge-Dirac operator
D_h = D + M^-1 D^T M.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from hodgedirac.core.config import get_settings
from hodgedirac.core.errors import HarmonicDimensionMismatch, SolverFailure
from hodgedirac.models.models import BoundaryCondition, Domain
from hodgedirac.services import linalg
from hodgedirac.services.mesh import SimplicialMesh, coboundary
from hodgedirac.services.whitney import assemble_mass, expand_dofs, free_dofs

logger = logging.getLogger(__name__)

# Betti numbers (natural BC) and their Poincare-Lefschetz duals (essential BC)
EXPECTED_HARMONIC_DIMS: Dict[Tuple[Domain, BoundaryCondition], Tuple[int, int, int]] = {
    (Domain.SQUARE, BoundaryCondition.NATURAL): (1, 0, 0),
    (Domain.DISK, BoundaryCondition.NATURAL): (1, 0, 0),
    (Domain.ANNULUS, BoundaryCondition.NATURAL): (1, 1, 0),
    (Domain.SQUARE, BoundaryCondition.ESSENTIAL): (0, 0, 1),
    (Domain.DISK, BoundaryCondition.ESSENTIAL): (0, 0, 1),
    (Domain.ANNULUS, BoundaryCondition.ESSENTIAL): (0, 1, 1),
}


def _embed(n: int, blocks) -> sp.csr_matrix:
    """Place (matrix, row_offset, col_offset) blocks into an n x n sparse matrix."""
    rows, cols, vals = [], [], []
    for block, r0, c0 in blocks:
        coo = sp.coo_matrix(block)
        rows.append(coo.row + r0)
        cols.append(coo.col + c0)
        vals.append(coo.data)
    out = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))) if rows else ([], ([], [])),
        shape=(n, n),
    )
    out.sum_duplicates()
    out.sort_indices()
    return out


@dataclass(frozen=True, eq=False)
class HarmonicBasis:
    bases: Tuple[np.ndarray, np.ndarray, np.ndarray]  # per degree, (n_k, h_k), M_k-orthonormal columns
    tol_rel: float

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(b.shape[1] for b in self.bases)

    @property
    def total(self) -> int:
        return sum(self.dims)


@dataclass(frozen=True, eq=False)
class GradedComplex:
    mesh: SimplicialMesh
    bc: BoundaryCondition
    dims: Tuple[int, int, int]
    d0: sp.csr_matrix  # n1 x n0
    d1: sp.csr_matrix  # n2 x n1
    masses: Tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]
    D: sp.csr_matrix
    M: sp.csr_matrix

    @property
    def size(self) -> int:
        return sum(self.dims)

    @property
    def offsets(self) -> Tuple[int, int, int, int]:
        n0, n1, n2 = self.dims
        return 0, n0, n0 + n1, n0 + n1 + n2

    def block(self, k: int) -> slice:
        off = self.offsets
        return slice(off[k], off[k + 1])

    def coboundary_block(self, k: int) -> sp.csr_matrix:
        return (self.d0, self.d1)[k]

    def inner(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(x @ (self.M @ y))

    @cached_property
    def mass_lu(self):
        try:
            return spla.splu(self.M.tocsc())
        except RuntimeError as e:
            raise SolverFailure(f"Mass matrix factorization failed: {e}") from e

    def solve_mass(self, b: np.ndarray) -> np.ndarray:
        if self.size == 0:
            return np.zeros(0)
        return self.mass_lu.solve(np.asarray(b, dtype=float))

    @cached_property
    def harmonic(self) -> HarmonicBasis:
        return harmonic_basis(self, get_settings().harmonic_tol_rel)

    @cached_property
    def harmonic_matrix(self) -> np.ndarray:
        """Dense graded n x h matrix whose columns are the harmonic basis cochains."""
        H = np.zeros((self.size, self.harmonic.total))
        col = 0
        for k, basis in enumerate(self.harmonic.bases):
            H[self.block(k), col : col + basis.shape[1]] = basis
            col += basis.shape[1]
        return H

    def cochain(self, values: Optional[np.ndarray] = None) -> "Cochain":
        return Cochain(self, np.zeros(self.size) if values is None else np.asarray(values, dtype=float))


@dataclass(frozen=True, eq=False)
class Cochain:
    complex: GradedComplex
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.complex.size,):
            raise ValueError(f"cochain length {self.values.shape} does not match complex size {self.complex.size}")

    def component(self, k: int) -> np.ndarray:
        return self.values[self.complex.block(k)]

    def mesh_component(self, k: int) -> np.ndarray:
        """Degree-k values on all mesh simplices, eliminated boundary DOFs as zeros."""
        return expand_dofs(self.complex.mesh, k, self.complex.bc, self.component(k))

    def __add__(self, other: "Cochain") -> "Cochain":
        return Cochain(self.complex, self.values + other.values)

    def __sub__(self, other: "Cochain") -> "Cochain":
        return Cochain(self.complex, self.values - other.values)

    def __mul__(self, scalar: float) -> "Cochain":
        return Cochain(self.complex, scalar * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class HodgeParts:
    b_part: Cochain
    h_part: Cochain
    bstar_part: Cochain


def build_complex(mesh: SimplicialMesh, bc: BoundaryCondition = BoundaryCondition.NATURAL) -> GradedComplex:
    bc = BoundaryCondition(bc)
    free = [free_dofs(mesh, k, bc) for k in range(3)]
    dims = tuple(len(f) for f in free)
    d0 = coboundary(mesh, 0).matrix[free[1]][:, free[0]].tocsr()
    d1 = coboundary(mesh, 1).matrix[:, free[1]].tocsr()
    masses = tuple(assemble_mass(mesh, k, bc) for k in range(3))

    n0, n1, n2 = dims
    n = n0 + n1 + n2
    D = _embed(n, [(d0, n0, 0), (d1, n0 + n1, n0)])
    M = _embed(n, [(masses[0], 0, 0), (masses[1], n0, n0), (masses[2], n0 + n1, n0 + n1)])

    if (D @ D).count_nonzero():
        raise SolverFailure("Assembled coboundary is not nilpotent")

    logger.info(f"Built {bc.value} complex on {mesh.domain.value} mesh: dims {dims}")
    return GradedComplex(mesh=mesh, bc=bc, dims=dims, d0=d0, d1=d1, masses=masses, D=D, M=M)


def _m_orthonormalize(N: np.ndarray, mass: sp.csr_matrix) -> np.ndarray:
    if N.shape[1] == 0:
        return N
    gram = N.T @ (mass @ N)
    L = scipy.linalg.cholesky(0.5 * (gram + gram.T), lower=True)
    return scipy.linalg.solve_triangular(L, N.T, lower=True).T


def _hodge_laplace_pencil(complex: GradedComplex, k: int) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """
    Degree-k Hodge-Laplace stiffness with the codifferential through a lumped
    M_{k-1}, and M_k. The stiffness is positive semidefinite with the same
    kernel as [D_k ; D_{k-1}^T M_k].
    """
    Mk = complex.masses[k]
    A = sp.csr_matrix(Mk.shape)
    if k < 2:
        Dk = complex.coboundary_block(k)
        A = A + Dk.T @ complex.masses[k + 1] @ Dk
    if k > 0:
        Dprev = complex.coboundary_block(k - 1)
        lumped = sp.diags(1.0 / complex.masses[k - 1].diagonal())
        A = A + Mk @ Dprev @ lumped @ Dprev.T @ Mk
    return sp.csr_matrix(0.5 * (A + A.T)), Mk


def _harmonic_nullspace(complex: GradedComplex, k: int, tol_rel: float, method: str) -> np.ndarray:
    n_k = complex.dims[k]
    rows = []
    if k < 2:
        rows.append(complex.coboundary_block(k))
    if k > 0:
        rows.append(complex.coboundary_block(k - 1).T @ complex.masses[k])
    stacked = sp.vstack(rows, format="csr") if rows else sp.csr_matrix((0, n_k))

    expected = EXPECTED_HARMONIC_DIMS.get((complex.mesh.domain, complex.bc))
    n_candidates = (expected[k] if expected is not None else 2) + 4
    if method == "auto":
        method = "sparse" if n_k > get_settings().harmonic_dense_limit else "dense"
    if method == "dense" or n_k < 4 * n_candidates:
        return linalg.nullspace(stacked.toarray(), tol_rel)

    A, B = _hodge_laplace_pencil(complex, k)
    while n_candidates <= n_k // 4:
        N = linalg.sparse_nullspace(stacked, A, B, n_candidates, tol_rel)
        if N.shape[1] < n_candidates:
            return N
        logger.warning(f"All {n_candidates} degree-{k} candidates are harmonic, retrying with more")
        n_candidates *= 2
    logger.warning(f"Falling back to a dense SVD for the degree-{k} harmonic space ({n_k} DOFs)")
    return linalg.nullspace(stacked.toarray(), tol_rel)


def harmonic_basis(
    complex: GradedComplex,
    tol_rel: float = linalg.DEFAULT_TOL_REL,
    method: str = "auto",
) -> HarmonicBasis:
    """
    Per degree k, an M-orthonormal basis of the nullspace of the stacked
    matrix [D_k ; D_{k-1}^T M_k], i.e. of ker d_h intersected with the
    M-orthogonal complement of range d_h.

    `method` is "dense" (full SVD), "sparse" (shift-invert candidates, then the
    same singular-value threshold) or "auto", which goes sparse for degrees
    with more than `harmonic_dense_limit` DOFs.
    """
    if method not in ("auto", "dense", "sparse"):
        raise ValueError(f"Unknown harmonic basis method {method!r}")
    bases = []
    for k in range(3):
        N = _harmonic_nullspace(complex, k, tol_rel, method) if complex.dims[k] else np.zeros((0, 0))
        bases.append(_m_orthonormalize(N, complex.masses[k]))

    basis = HarmonicBasis(bases=tuple(bases), tol_rel=tol_rel)
    _check_harmonic_dims(complex, basis.dims)
    logger.info(f"Harmonic dims {basis.dims} ({complex.bc.value} BC, {complex.mesh.domain.value})")
    return basis


def _check_harmonic_dims(complex: GradedComplex, dims: Tuple[int, int, int]) -> None:
    expected = EXPECTED_HARMONIC_DIMS.get((complex.mesh.domain, complex.bc))
    if expected is not None and dims != expected:
        raise HarmonicDimensionMismatch(
            f"Harmonic dims {dims} differ from the Betti numbers {expected} of the "
            f"{complex.mesh.domain.value} domain with {complex.bc.value} BC"
        )
    chi = complex.mesh.euler_characteristic
    if complex.size and dims[0] - dims[1] + dims[2] != chi:
        raise HarmonicDimensionMismatch(f"Harmonic dims {dims} inconsistent with Euler characteristic {chi}")


def _exact_projection(complex: GradedComplex, k: int, r: np.ndarray, tol: Optional[float] = None) -> np.ndarray:
    """
    M-orthogonal projection of a degree-k cochain onto range(D_{k-1}).

    Solves the mixed Hodge-Laplace system at degree j = k-1 with source
    <r, d v>, which pins the potential to the complement of ker D_j:
        [ -M_{j-1}       D_{j-1}^T M_j   0      ] [rho  ]   [ 0           ]
        [ M_j D_{j-1}    D_j^T M_k D_j   M_j Q  ] [sigma] = [ D_j^T M_k r ]
        [ 0              Q^T M_j         0      ] [mu   ]   [ 0           ]
    """
    j = k - 1
    n_j = complex.dims[j]
    if n_j == 0 or complex.dims[k] == 0:
        return np.zeros(complex.dims[k])
    Dj = complex.coboundary_block(j)
    Mj = complex.masses[j]
    Mk = complex.masses[k]
    Q = sp.csr_matrix(complex.harmonic.bases[j])

    blocks = [[None] * 3 for _ in range(3)]
    blocks[1][1] = Dj.T @ Mk @ Dj
    n_rho = complex.dims[j - 1] if j >= 1 else 0
    if n_rho:
        Dprev = complex.coboundary_block(j - 1)
        blocks[0][0] = -complex.masses[j - 1]
        blocks[0][1] = Dprev.T @ Mj
        blocks[1][0] = Mj @ Dprev
    n_mu = Q.shape[1]
    if n_mu:
        blocks[1][2] = Mj @ Q
        blocks[2][1] = (Mj @ Q).T

    sizes = [n_rho, n_j, n_mu]
    keep = [i for i in range(3) if sizes[i]]
    matrix = sp.bmat([[blocks[a][b] if blocks[a][b] is not None else sp.csr_matrix((sizes[a], sizes[b])) for b in keep] for a in keep], format="csr")
    rhs = np.zeros(matrix.shape[0])
    start = n_rho
    rhs[start : start + n_j] = Dj.T @ (Mk @ r)
    solution = linalg.solve_symmetric_indefinite(matrix, rhs, tol=tol)
    sigma = solution[start : start + n_j]
    return Dj @ sigma


def hodge_decompose(complex: GradedComplex, x: Cochain, tol: Optional[float] = None) -> HodgeParts:
    """
    Split x = b + h + b* into exact, harmonic and co-exact parts (degreewise).
    `tol` is the target residual of the projection solves (settings.solve_tol
    when None).
    """
    b_part = np.zeros(complex.size)
    h_part = np.zeros(complex.size)
    for k in range(3):
        block = complex.block(k)
        x_k = x.values[block]
        Q = complex.harmonic.bases[k]
        h = Q @ (Q.T @ (complex.masses[k] @ x_k)) if Q.shape[1] else np.zeros_like(x_k)
        r = x_k - h
        b = _exact_projection(complex, k, r, tol) if k > 0 else np.zeros_like(x_k)
        h_part[block] = h
        b_part[block] = b
    bstar_part = x.values - b_part - h_part
    return HodgeParts(
        b_part=complex.cochain(b_part),
        h_part=complex.cochain(h_part),
        bstar_part=complex.cochain(bstar_part),
    )


def apply_dirac(complex: GradedComplex, u: Cochain) -> Cochain:
    """D_h u = D u + M^-1 D^T M u."""
    du = complex.D @ u.values
    adjoint = complex.solve_mass(complex.D.T @ (complex.M @ u.values))
    if not np.all(np.isfinite(adjoint)):
        raise SolverFailure("Mass solve produced non-finite values")
    return complex.cochain(du + adjoint)


def harmonic_matrix(complex: GradedComplex) -> np.ndarray:
    return complex.harmonic_matrix


def to_mesh_dofs(x: Cochain) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-degree values on every mesh simplex, eliminated essential-BC DOFs as zeros."""
    return tuple(x.mesh_component(k) for k in range(3))
