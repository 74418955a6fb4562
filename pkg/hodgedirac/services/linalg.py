"""
Linear-algebra kernel sized for desk-scale meshes.

Sparse matrices are scipy CSR matrices, dense ones plain 2D numpy arrays.
Saddle systems are factorized directly (SuperLU) and polished with a few
sweeps of iterative refinement. Nullspaces come from a dense SVD, or for
large sparse matrices from a thin shift-invert candidate block. Generalized
eigenproblems go to LAPACK, or to ARPACK shift-invert for the few
eigenvalues nearest zero of a large pencil.
"""
import logging
from typing import Optional, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from hodgedirac.core.config import get_settings
from hodgedirac.core.errors import NotPositiveDefinite, NotSymmetric, SingularSystem

logger = logging.getLogger(__name__)

DEFAULT_TOL_REL = 1e-9

# Residuals above this after refinement mean the factorization is worthless
SINGULAR_RESIDUAL = 1e-6

MatrixLike = Union[sp.spmatrix, np.ndarray]


def as_sparse(A: MatrixLike) -> sp.csr_matrix:
    return sp.csr_matrix(A, dtype=float)


def as_dense(A: MatrixLike) -> np.ndarray:
    if sp.issparse(A):
        return A.toarray()
    return np.asarray(A, dtype=float)


def residual_norm(A: MatrixLike, x: np.ndarray, b: np.ndarray) -> float:
    """Relative residual ||Ax - b|| / ||b||, absolute when b = 0."""
    r = A @ x - b
    b_norm = float(np.linalg.norm(b))
    r_norm = float(np.linalg.norm(r))
    return r_norm / b_norm if b_norm > 0.0 else r_norm


def check_symmetric(A: MatrixLike, tol_rel: float = 1e-12) -> None:
    if A.shape[0] != A.shape[1]:
        raise NotSymmetric(f"Matrix is not square: {A.shape}")
    if sp.issparse(A):
        scale = abs(A).max() if A.nnz else 0.0
        diff = abs(A - A.T)
        worst = diff.max() if diff.nnz else 0.0
    else:
        scale = float(np.abs(A).max()) if A.size else 0.0
        worst = float(np.abs(A - A.T).max()) if A.size else 0.0
    if worst > tol_rel * scale:
        raise NotSymmetric(f"Asymmetry {worst:.3e} exceeds {tol_rel:.1e} x max entry {scale:.3e}")


def solve_symmetric_indefinite(
    A: MatrixLike,
    b: np.ndarray,
    tol: Optional[float] = None,
    refine_steps: Optional[int] = None,
) -> np.ndarray:
    """
    Solve the symmetric (possibly indefinite) system Ax = b.

    Uses a sparse LU factorization followed by iterative refinement until the
    relative residual drops below `tol`. A residual that stays above `tol` is
    logged and returned; one above SINGULAR_RESIDUAL raises SingularSystem.
    """
    settings = get_settings()
    tol = settings.solve_tol if tol is None else tol
    refine_steps = settings.refine_steps if refine_steps is None else refine_steps

    A = as_sparse(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise ValueError(f"Incompatible shapes: A {A.shape}, b {b.shape}")
    if n == 0:
        return np.zeros(0)
    check_symmetric(A)

    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as e:
        raise SingularSystem(f"Factorization of {n}x{n} system failed: {e}") from e

    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularSystem(f"Non-finite solution of {n}x{n} system")
    residual = residual_norm(A, x, b)
    for _ in range(refine_steps):
        if residual <= tol:
            break
        x = x + lu.solve(b - A @ x)
        residual = residual_norm(A, x, b)

    if residual > SINGULAR_RESIDUAL:
        raise SingularSystem(f"Residual {residual:.3e} of {n}x{n} system indicates rank deficiency")
    if residual > tol:
        logger.warning(f"Solve of {n}x{n} system reached residual {residual:.3e} (target {tol:.1e})")
    else:
        logger.debug(f"Solved {n}x{n} system, residual {residual:.3e}")
    return x


def nullspace(A: MatrixLike, tol_rel: float = DEFAULT_TOL_REL) -> np.ndarray:
    """
    Orthonormal basis (as columns) of the numerical nullspace of A.

    A singular value counts as zero when it is at most tol_rel * sigma_max.
    """
    if tol_rel <= 0:
        raise ValueError("tol_rel must be positive")
    A = as_dense(A)
    m, n = A.shape
    if n == 0:
        return np.zeros((0, 0))
    if m == 0:
        return np.eye(n)

    try:
        _, s, vh = scipy.linalg.svd(A, full_matrices=True)
    except np.linalg.LinAlgError:
        _, s, vh = scipy.linalg.svd(A, full_matrices=True, lapack_driver="gesvd")

    sigma_max = s[0] if s.size else 0.0
    if sigma_max == 0.0:
        return np.eye(n)
    rank = int(np.count_nonzero(s > tol_rel * sigma_max))
    return vh[rank:].T.copy()


def sparse_nullspace(
    S: MatrixLike,
    A: MatrixLike,
    B: MatrixLike,
    n_candidates: int,
    tol_rel: float = DEFAULT_TOL_REL,
) -> np.ndarray:
    """
    Nullspace of a large sparse S without a dense SVD.

    A must be symmetric positive semidefinite with ker A = ker S and B
    symmetric positive definite. The n_candidates eigenvectors of A x = lambda B x
    nearest zero span the candidate space; the SVD threshold of `nullspace`
    (relative to sigma_max of S) is applied to S restricted to it. Returns
    orthonormal columns; if every candidate is null the kernel may be larger
    and the caller should retry with more candidates.
    """
    if tol_rel <= 0:
        raise ValueError("tol_rel must be positive")
    S = as_sparse(S)
    n = S.shape[1]
    if n_candidates < 1 or n_candidates >= n - 1:
        raise ValueError(f"need 1 <= n_candidates < {n - 1}, got {n_candidates}")
    A = as_sparse(A).tocsc()
    B = as_sparse(B).tocsc()

    ratio = A.diagonal() / B.diagonal()
    shift = 1e-3 * float(np.mean(ratio)) if np.any(ratio > 0) else 1.0
    try:
        _, v = spla.eigsh(A, k=n_candidates, M=B, sigma=-shift, which="LM")
        sigma_max = float(spla.svds(S, k=1, return_singular_vectors=False)[0]) if S.shape[0] else 0.0
    except RuntimeError as e:
        raise SingularSystem(f"Shift-invert factorization failed: {e}") from e
    except spla.ArpackNoConvergence as e:
        raise SingularSystem(f"ARPACK did not converge for {n}x{n} pencil: {e}") from e

    Q, _ = np.linalg.qr(v)
    if sigma_max == 0.0:
        return Q
    _, s, vh = scipy.linalg.svd(S @ Q, full_matrices=False)
    rank = int(np.count_nonzero(s > tol_rel * sigma_max))
    logger.debug(f"Sparse nullspace of {S.shape[0]}x{n}: {n_candidates - rank} of {n_candidates} candidates null")
    return Q @ vh[rank:].T


def generalized_symmetric_eig(A: MatrixLike, B: MatrixLike) -> Tuple[np.ndarray, np.ndarray]:
    """All eigenpairs of Ax = lambda Bx, ascending, with B-orthonormal eigenvectors."""
    A = as_dense(A)
    B = as_dense(B)
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise ValueError(f"Incompatible shapes: A {A.shape}, B {B.shape}")
    if A.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 0))
    check_symmetric(A, tol_rel=1e-10)
    check_symmetric(B, tol_rel=1e-10)
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    try:
        return scipy.linalg.eigh(A, B)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefinite(f"B is not positive definite: {e}") from e


def smallest_magnitude_eig(A: MatrixLike, B: MatrixLike, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    The k eigenpairs of Ax = lambda Bx with eigenvalues nearest zero, sorted by
    |lambda|. A must be nonsingular, B symmetric positive definite.
    """
    n = A.shape[0]
    if n <= max(k + 1, 32):
        w, v = generalized_symmetric_eig(A, B)
        order = np.argsort(np.abs(w), kind="stable")[:k]
        return w[order], v[:, order]

    A = as_sparse(A).tocsc()
    B = as_sparse(B).tocsc()
    try:
        w, v = spla.eigsh(A, k=k, M=B, sigma=0.0, which="LM")
    except RuntimeError as e:
        raise SingularSystem(f"Shift-invert factorization failed: {e}") from e
    except spla.ArpackNoConvergence as e:
        raise SingularSystem(f"ARPACK did not converge for {n}x{n} pencil: {e}") from e

    scale = np.sqrt(np.einsum("ij,ij->j", v, B @ v))
    v = v / scale
    order = np.argsort(np.abs(w), kind="stable")
    return w[order], v[:, order]
