"""
Lowest-order Whitney forms on triangle meshes.

Basis conventions:
  - 0-forms: barycentric hats lambda_i.
  - 1-forms: W_(i,j) = lambda_i dlambda_j - lambda_j dlambda_i for each
    edge (i, j), i < j; its integral along i -> j is 1.
  - 2-forms: s_T / |T| dx1^dx2 per triangle, where s_T is the
    orientation sign of the increasing-index vertex order, so the form
    integrates to 1 over the oriented simplex.

With these bases the matrix of d is exactly the integer incidence matrix
at both degrees.

Essential boundary conditions are realized by dropping boundary vertex and
edge DOFs; `free_dofs` gives the retained indices.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from hodgedirac.models.models import BoundaryCondition
from hodgedirac.services.mesh import LOCAL_EDGES, SimplicialMesh, boundary_simplices

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (Q, 3) barycentric
    weights: np.ndarray  # (Q,), sums to 1
    degree: int


def _dunavant7() -> QuadratureRule:
    # Degree-5 seven point rule (Dunavant), weights rescaled to the unit reference measure
    r = np.sqrt(15.0)
    a = (6.0 + r) / 21.0
    b = (6.0 - r) / 21.0
    wa = (155.0 + r) / 1200.0
    wb = (155.0 - r) / 1200.0
    points = np.array(
        [
            [1 / 3, 1 / 3, 1 / 3],
            [1 - 2 * a, a, a],
            [a, 1 - 2 * a, a],
            [a, a, 1 - 2 * a],
            [1 - 2 * b, b, b],
            [b, 1 - 2 * b, b],
            [b, b, 1 - 2 * b],
        ]
    )
    weights = np.array([9 / 40, wa, wa, wa, wb, wb, wb])
    return QuadratureRule(points=points, weights=weights, degree=5)


TRIANGLE_RULES = {
    1: QuadratureRule(points=np.full((1, 3), 1 / 3), weights=np.ones(1), degree=1),
    2: QuadratureRule(
        points=np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        weights=np.full(3, 1 / 3),
        degree=2,
    ),
    5: _dunavant7(),
}
DEFAULT_RULE = TRIANGLE_RULES[5]


def gauss_edge_rule(n_points: int = 3) -> tuple:
    """Gauss-Legendre points on [0, 1] with weights summing to 1."""
    x, w = np.polynomial.legendre.leggauss(n_points)
    return 0.5 * (x + 1.0), 0.5 * w


EDGE_POINTS, EDGE_WEIGHTS = gauss_edge_rule(3)


@dataclass(frozen=True)
class AnalyticForm:
    """
    A smooth k-form given by a vectorized coefficient function.

    `func(x, y)` receives equally shaped arrays and returns the single
    coefficient for k in {0, 2} (the density g of g dx1^dx2 for k = 2) or
    a pair (a1, a2) for the 1-form a1 dx1 + a2 dx2. Scalars broadcast.
    """

    degree: int
    func: Callable

    def __post_init__(self):
        if self.degree not in (0, 1, 2):
            raise ValueError(f"form degree must be 0, 1 or 2, got {self.degree}")

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        value = self.func(x, y)
        if self.degree == 1:
            a1, a2 = value
            return np.stack([np.broadcast_to(a1, x.shape), np.broadcast_to(a2, x.shape)], axis=-1).astype(float)
        return np.array(np.broadcast_to(value, x.shape), dtype=float)


@dataclass(frozen=True)
class GradedForm:
    zero: Optional[AnalyticForm] = None
    one: Optional[AnalyticForm] = None
    two: Optional[AnalyticForm] = None

    def __post_init__(self):
        for k, form in enumerate((self.zero, self.one, self.two)):
            if form is not None and form.degree != k:
                raise ValueError(f"degree-{k} slot holds a degree-{form.degree} form")

    def component(self, k: int) -> Optional[AnalyticForm]:
        return (self.zero, self.one, self.two)[k]


def dof_count(mesh: SimplicialMesh, k: int) -> int:
    return mesh.counts[k]


def free_dofs(mesh: SimplicialMesh, k: int, bc: BoundaryCondition) -> np.ndarray:
    """Indices of the DOFs kept under the boundary condition."""
    n = dof_count(mesh, k)
    if BoundaryCondition(bc) == BoundaryCondition.NATURAL or k == 2:
        return np.arange(n)
    return np.setdiff1d(np.arange(n), boundary_simplices(mesh, k))


def expand_dofs(mesh: SimplicialMesh, k: int, bc: BoundaryCondition, values: np.ndarray) -> np.ndarray:
    """Re-insert eliminated boundary DOFs as zeros."""
    values = np.asarray(values, dtype=float)
    n = dof_count(mesh, k)
    if len(values) == n:
        return values
    free = free_dofs(mesh, k, bc)
    if len(values) != len(free):
        raise ValueError(f"degree-{k} cochain has length {len(values)}, expected {len(free)} or {n}")
    full = np.zeros(n)
    full[free] = values
    return full


def barycentric_gradients(mesh: SimplicialMesh) -> np.ndarray:
    """(F, 3, 2) constant gradients of the barycentric coordinates."""
    p = mesh.vertices[mesh.triangles]
    nxt = np.roll(p, -1, axis=1)
    prv = np.roll(p, -2, axis=1)
    grads = np.stack([nxt[..., 1] - prv[..., 1], prv[..., 0] - nxt[..., 0]], axis=-1)
    return grads / (2.0 * mesh.signed_areas)[:, None, None]


def quadrature_points(mesh: SimplicialMesh, rule: QuadratureRule = DEFAULT_RULE) -> np.ndarray:
    """(F, Q, 2) physical coordinates of the rule's points on every triangle."""
    return np.einsum("qi,tic->tqc", rule.points, mesh.vertices[mesh.triangles])


def _local_mass(mesh: SimplicialMesh, k: int) -> np.ndarray:
    areas = mesh.areas
    if k == 0:
        local = (np.ones((3, 3)) + np.eye(3)) / 12.0
        return areas[:, None, None] * local
    if k == 1:
        grads = barycentric_gradients(mesh)
        dots = np.einsum("tic,tjc->tij", grads, grads)
        ints = areas[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
        x = np.array([e[0] for e in LOCAL_EDGES])[:, None]
        y = np.array([e[1] for e in LOCAL_EDGES])[:, None]
        p = x.T
        q = y.T
        return (
            ints[:, x, p] * dots[:, y, q]
            - ints[:, x, q] * dots[:, y, p]
            - ints[:, y, p] * dots[:, x, q]
            + ints[:, y, q] * dots[:, x, p]
        )
    return (1.0 / areas)[:, None, None]


def _local_dofs(mesh: SimplicialMesh, k: int) -> np.ndarray:
    if k == 0:
        return mesh.triangles
    if k == 1:
        return mesh.triangle_edges
    return np.arange(len(mesh.triangles))[:, None]


def assemble_mass(mesh: SimplicialMesh, k: int, bc: BoundaryCondition = BoundaryCondition.NATURAL) -> sp.csr_matrix:
    """L2 Gram matrix of the degree-k Whitney basis, boundary DOFs removed for essential BC."""
    if k not in (0, 1, 2):
        raise ValueError(f"form degree must be 0, 1 or 2, got {k}")
    local = _local_mass(mesh, k)
    dofs = _local_dofs(mesh, k)
    n_local = dofs.shape[1]
    rows = np.repeat(dofs, n_local, axis=1).ravel()
    cols = np.tile(dofs, (1, n_local)).ravel()
    n = dof_count(mesh, k)
    mass = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    free = free_dofs(mesh, k, bc)
    if len(free) != n:
        mass = mass[free][:, free]
    mass.sort_indices()
    return mass


def de_rham_map(mesh: SimplicialMesh, form: AnalyticForm, bc: BoundaryCondition = BoundaryCondition.NATURAL) -> np.ndarray:
    """Integrate the form over every simplex of its degree (the DOFs of its Whitney interpolant)."""
    k = form.degree
    if k == 0:
        values = form.evaluate(mesh.vertices[:, 0], mesh.vertices[:, 1])
    elif k == 1:
        start = mesh.vertices[mesh.edges[:, 0]]
        tangent = mesh.vertices[mesh.edges[:, 1]] - start
        pts = start[:, None, :] + EDGE_POINTS[None, :, None] * tangent[:, None, :]
        coeffs = form.evaluate(pts[..., 0], pts[..., 1])
        values = np.einsum("eqc,ec,q->e", coeffs, tangent, EDGE_WEIGHTS)
    else:
        pts = quadrature_points(mesh)
        dens = form.evaluate(pts[..., 0], pts[..., 1])
        values = mesh.orientation_signs * mesh.areas * (dens @ DEFAULT_RULE.weights)
    return values[free_dofs(mesh, k, bc)]


def _basis_at(mesh: SimplicialMesh, k: int, bary: np.ndarray) -> np.ndarray:
    """
    Local basis functions at barycentric points: (F, Q, nloc) for k in {0, 2},
    (F, Q, 3, 2) for k = 1.
    """
    n_tri = len(mesh.triangles)
    if k == 0:
        return np.broadcast_to(bary, (n_tri,) + bary.shape)
    if k == 1:
        grads = barycentric_gradients(mesh)
        basis = []
        for a, b in LOCAL_EDGES:
            basis.append(
                bary[None, :, a, None] * grads[:, None, b, :] - bary[None, :, b, None] * grads[:, None, a, :]
            )
        return np.stack(basis, axis=2)
    density = (mesh.orientation_signs / mesh.areas)[:, None, None]
    return np.broadcast_to(density, (n_tri, len(bary), 1))


def load_vector(
    mesh: SimplicialMesh,
    k: int,
    f: AnalyticForm,
    bc: BoundaryCondition = BoundaryCondition.NATURAL,
    rule: QuadratureRule = DEFAULT_RULE,
) -> np.ndarray:
    """Entries <f, phi_i> of the degree-k Whitney basis."""
    if f.degree != k:
        raise ValueError(f"load vector of degree {k} needs a degree-{k} form, got {f.degree}")
    pts = quadrature_points(mesh, rule)
    values = f.evaluate(pts[..., 0], pts[..., 1])
    basis = _basis_at(mesh, k, rule.points)
    weights = mesh.areas[:, None] * rule.weights[None, :]
    if k == 1:
        local = np.einsum("tq,tqc,tqlc->tl", weights, values, basis)
    else:
        local = np.einsum("tq,tq,tql->tl", weights, values, basis)
    dofs = _local_dofs(mesh, k)
    n = dof_count(mesh, k)
    # bincount accumulates in index order, so the result is schedule independent
    full = np.bincount(dofs.ravel(), weights=local.ravel(), minlength=n)
    return full[free_dofs(mesh, k, bc)]


def graded_load_vector(mesh: SimplicialMesh, f: GradedForm, bc: BoundaryCondition) -> np.ndarray:
    parts = []
    for k in range(3):
        form = f.component(k)
        n = len(free_dofs(mesh, k, bc))
        parts.append(np.zeros(n) if form is None else load_vector(mesh, k, form, bc))
    return np.concatenate(parts)


def graded_de_rham_map(mesh: SimplicialMesh, f: GradedForm, bc: BoundaryCondition) -> np.ndarray:
    parts = []
    for k in range(3):
        form = f.component(k)
        n = len(free_dofs(mesh, k, bc))
        parts.append(np.zeros(n) if form is None else de_rham_map(mesh, form, bc))
    return np.concatenate(parts)


def evaluate_whitney(
    mesh: SimplicialMesh,
    k: int,
    values: np.ndarray,
    bary: np.ndarray,
    bc: BoundaryCondition = BoundaryCondition.NATURAL,
) -> np.ndarray:
    """Whitney interpolant of a cochain at barycentric points: (F, Q) or (F, Q, 2) for k = 1."""
    full = expand_dofs(mesh, k, bc, values)
    local = full[_local_dofs(mesh, k)]
    basis = _basis_at(mesh, k, np.atleast_2d(bary))
    if k == 1:
        return np.einsum("tl,tqlc->tqc", local, basis)
    return np.einsum("tl,tql->tq", local, basis)


def sample_field(
    mesh: SimplicialMesh,
    k: int,
    values: np.ndarray,
    bc: BoundaryCondition = BoundaryCondition.NATURAL,
) -> np.ndarray:
    """
    Per-entity samples for output: vertex values (k=0), barycenter vectors
    (u1, u2) per triangle (k=1), per-triangle densities (k=2).
    """
    if k == 0:
        return expand_dofs(mesh, 0, bc, values)
    centroid = np.full((1, 3), 1 / 3)
    samples = evaluate_whitney(mesh, k, values, centroid, bc)
    return samples[:, 0]


def l2_error(
    mesh: SimplicialMesh,
    k: int,
    values: Optional[np.ndarray],
    exact: Optional[AnalyticForm],
    bc: BoundaryCondition = BoundaryCondition.NATURAL,
    rule: QuadratureRule = DEFAULT_RULE,
) -> float:
    """
    L2 norm of (exact - Whitney interpolant of values) by quadrature; either
    side may be None (treated as zero).
    """
    n_tri = len(mesh.triangles)
    shape = (n_tri, len(rule.points)) + ((2,) if k == 1 else ())
    diff = np.zeros(shape)
    if exact is not None:
        pts = quadrature_points(mesh, rule)
        diff += exact.evaluate(pts[..., 0], pts[..., 1])
    if values is not None:
        diff -= evaluate_whitney(mesh, k, values, rule.points, bc)
    sq = diff**2 if k != 1 else np.sum(diff**2, axis=-1)
    return float(np.sqrt(np.sum(mesh.areas[:, None] * rule.weights[None, :] * sq)))


def locate_points(mesh: SimplicialMesh, x: np.ndarray, y: np.ndarray, chunk: int = 256) -> tuple:
    """
    Containing triangle and barycentric coordinates for each point, choosing
    the triangle whose smallest barycentric coordinate is largest (points on
    shared edges resolve to either neighbour).
    """
    pts = np.column_stack([np.ravel(x), np.ravel(y)])
    grads = barycentric_gradients(mesh)
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    owner = np.empty(len(pts), dtype=np.int64)
    bary = np.empty((len(pts), 3))
    for start in range(0, len(pts), chunk):
        block = pts[start : start + chunk]
        offset = block[:, None, :] - centroids[None, :, :]
        lam = 1.0 / 3.0 + np.einsum("ptc,tic->pti", offset, grads)
        best = np.argmax(lam.min(axis=2), axis=1)
        owner[start : start + chunk] = best
        bary[start : start + chunk] = lam[np.arange(len(block)), best]
    return owner, bary


def interpolant_form(
    mesh: SimplicialMesh,
    k: int,
    values: np.ndarray,
    bc: BoundaryCondition = BoundaryCondition.NATURAL,
) -> AnalyticForm:
    """The Whitney interpolant of a cochain as a pointwise-evaluable form."""
    full = expand_dofs(mesh, k, bc, values)
    local = full[_local_dofs(mesh, k)]
    grads = barycentric_gradients(mesh)
    density = mesh.orientation_signs / mesh.areas

    def func(x, y):
        shape = np.shape(x)
        owner, lam = locate_points(mesh, x, y)
        if k == 0:
            out = np.einsum("pi,pi->p", local[owner], lam)
            return out.reshape(shape)
        if k == 2:
            return (local[owner, 0] * density[owner]).reshape(shape)
        g = grads[owner]
        vec = np.zeros((len(owner), 2))
        for slot, (a, b) in enumerate(LOCAL_EDGES):
            vec += local[owner, slot, None] * (lam[:, a, None] * g[:, b] - lam[:, b, None] * g[:, a])
        return vec[:, 0].reshape(shape), vec[:, 1].reshape(shape)

    return AnalyticForm(degree=k, func=func)
