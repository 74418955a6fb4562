"""
Oriented 2D simplicial complexes.

Every simplex is stored as a strictly increasing vertex tuple and the
tables are sorted lexicographically, so cochain DOF order is table order
and incidence signs follow from the increasing-index orientation alone.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from hodgedirac.core.errors import DegenerateTriangle, InvalidMesh, MeshFormatError
from hodgedirac.models.models import Domain

logger = logging.getLogger(__name__)

MIN_AREA = 1e-14

# Local edge order of a sorted triangle (a, b, c)
LOCAL_EDGES = ((0, 1), (0, 2), (1, 2))
# Incidence of those edges in the boundary of (a, b, c): +(b,c) - (a,c) + (a,b)
LOCAL_EDGE_SIGNS = (1.0, -1.0, 1.0)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _edge_keys(edges: np.ndarray, n_vertices: int) -> np.ndarray:
    return edges[:, 0].astype(np.int64) * n_vertices + edges[:, 1]


@dataclass(frozen=True, eq=False)
class SimplicialMesh:
    vertices: np.ndarray  # (V, 2) float
    edges: np.ndarray  # (E, 2) int, v0 < v1, lexicographic
    triangles: np.ndarray  # (F, 3) int, v0 < v1 < v2, lexicographic
    domain: Domain = Domain.EXTERNAL
    resolution: Optional[int] = field(default=None)

    @classmethod
    def from_triangles(
        cls,
        vertices: np.ndarray,
        triangles: np.ndarray,
        domain: Domain = Domain.EXTERNAL,
        resolution: Optional[int] = None,
        edges: Optional[np.ndarray] = None,
    ) -> "SimplicialMesh":
        """Canonicalize orientation/order, derive the edge table and validate."""
        vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
        triangles = np.sort(np.asarray(triangles, dtype=np.int64).reshape(-1, 3), axis=1)
        if triangles.size:
            triangles = triangles[np.lexsort(triangles.T[::-1])]

        derived = np.unique(triangles[:, list(LOCAL_EDGES)].reshape(-1, 2), axis=0)
        if edges is not None:
            given = np.unique(np.sort(np.asarray(edges, dtype=np.int64).reshape(-1, 2), axis=1), axis=0)
            if len(given) != len(np.asarray(edges).reshape(-1, 2)):
                raise InvalidMesh("Edge table contains duplicates")
            if given.shape != derived.shape or not np.array_equal(given, derived):
                raise InvalidMesh("Edge table does not match the edges of the triangles")

        mesh = cls(
            vertices=_readonly(vertices.copy()),
            edges=_readonly(derived.reshape(-1, 2)),
            triangles=_readonly(triangles),
            domain=domain,
            resolution=resolution,
        )
        validate_mesh(mesh)
        return mesh

    @property
    def counts(self) -> tuple:
        return len(self.vertices), len(self.edges), len(self.triangles)

    @property
    def euler_characteristic(self) -> int:
        v, e, f = self.counts
        return v - e + f

    @cached_property
    def triangle_edges(self) -> np.ndarray:
        """(F, 3) edge indices of (a,b), (a,c), (b,c) for each triangle (a, b, c)."""
        keys = _edge_keys(self.edges, len(self.vertices))
        local = self.triangles[:, list(LOCAL_EDGES)]
        wanted = local[..., 0] * len(self.vertices) + local[..., 1]
        return _readonly(np.searchsorted(keys, wanted))

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return _readonly(0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]))

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @property
    def orientation_signs(self) -> np.ndarray:
        """+1 where the increasing-index order runs counter-clockwise, -1 otherwise."""
        return np.where(self.signed_areas >= 0.0, 1.0, -1.0)


def validate_mesh(mesh: SimplicialMesh) -> None:
    n_vertices = len(mesh.vertices)
    if mesh.triangles.size and (mesh.triangles.min() < 0 or mesh.triangles.max() >= n_vertices):
        raise InvalidMesh("Triangle references a vertex outside the vertex table")
    if np.any(np.diff(mesh.triangles, axis=1) <= 0):
        raise InvalidMesh("Triangle vertex tuples must be strictly increasing")
    if np.any(np.diff(mesh.edges, axis=1) <= 0):
        raise InvalidMesh("Edge vertex tuples must be strictly increasing")
    if not np.all(np.isfinite(mesh.vertices)):
        raise InvalidMesh("Vertex coordinates must be finite")

    keys = _edge_keys(mesh.edges, n_vertices)
    if np.any(np.diff(keys) <= 0):
        raise InvalidMesh("Edge table must be sorted without duplicates")

    bad = np.flatnonzero(mesh.areas < MIN_AREA)
    if bad.size:
        raise DegenerateTriangle(f"{bad.size} triangle(s) with area below {MIN_AREA:g}, first {mesh.triangles[bad[0]]}")

    per_edge = np.bincount(mesh.triangle_edges.ravel(), minlength=len(mesh.edges))
    if np.any(per_edge > 2):
        raise InvalidMesh("Non-manifold mesh: an edge bounds more than two triangles")
    if np.any(per_edge == 0):
        raise InvalidMesh("Edge table contains edges that bound no triangle")


def _square(n: int) -> tuple:
    ticks = np.arange(n + 1) / n
    x, y = np.meshgrid(ticks, ticks)
    vertices = np.column_stack([x.ravel(), y.ravel()])

    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    triangles = np.concatenate([np.column_stack([v00, v10, v11]), np.column_stack([v00, v01, v11])])
    return vertices, triangles


def _disk(n: int) -> tuple:
    """Concentric rings of 6r vertices at radius r/n around a center vertex."""
    vertices = [(0.0, 0.0)]
    for r in range(1, n + 1):
        theta = 2.0 * np.pi * np.arange(6 * r) / (6 * r)
        radius = r / n
        vertices.extend(zip(radius * np.cos(theta), radius * np.sin(theta)))

    def ring(r: int, j: int) -> int:
        if r == 0:
            return 0
        return 1 + 3 * r * (r - 1) + j % (6 * r)

    triangles = []
    for r in range(1, n + 1):
        for s in range(6):
            for k in range(r):
                inner = ring(r - 1, s * (r - 1) + k)
                triangles.append((ring(r, s * r + k), ring(r, s * r + k + 1), inner))
            for k in range(r - 1):
                inner, inner_next = ring(r - 1, s * (r - 1) + k), ring(r - 1, s * (r - 1) + k + 1)
                triangles.append((inner, inner_next, ring(r, s * r + k + 1)))
    return np.array(vertices), np.array(triangles)


def _annulus(n: int, inner_radius: float = 0.5, outer_radius: float = 1.0) -> tuple:
    """n layers between two circles, 8n vertices per ring, each quad split in two."""
    m = 8 * n
    theta = 2.0 * np.pi * np.arange(m) / m
    radii = inner_radius + (outer_radius - inner_radius) * np.arange(n + 1) / n
    vertices = np.concatenate([np.column_stack([r * np.cos(theta), r * np.sin(theta)]) for r in radii])

    q, j = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    a = (q * m + j).ravel()
    b = (q * m + (j + 1) % m).ravel()
    c = a + m
    d = b + m
    triangles = np.concatenate([np.column_stack([a, b, d]), np.column_stack([a, d, c])])
    return vertices, triangles


_GENERATORS = {
    Domain.SQUARE: _square,
    Domain.DISK: _disk,
    Domain.ANNULUS: _annulus,
}


def generate_mesh(domain: Domain, resolution: int) -> SimplicialMesh:
    domain = Domain(domain)
    if resolution < 1:
        raise ValueError(f"resolution must be >= 1, got {resolution}")
    if domain not in _GENERATORS:
        raise ValueError(f"No built-in generator for domain '{domain.value}'")
    vertices, triangles = _GENERATORS[domain](resolution)
    mesh = SimplicialMesh.from_triangles(vertices, triangles, domain=domain, resolution=resolution)
    logger.debug(f"Generated {domain.value} mesh, resolution {resolution}: V,E,F = {mesh.counts}")
    return mesh


@dataclass(frozen=True, eq=False)
class IncidenceMatrix:
    matrix: sp.csr_matrix
    degree: int


def coboundary(mesh: SimplicialMesh, k: int) -> IncidenceMatrix:
    """Signed incidence matrix mapping k-cochains to (k+1)-cochains."""
    n_vertices, n_edges, n_triangles = mesh.counts
    if k == 0:
        rows = np.repeat(np.arange(n_edges), 2)
        cols = mesh.edges.ravel()
        vals = np.tile([-1.0, 1.0], n_edges)
        shape = (n_edges, n_vertices)
    elif k == 1:
        rows = np.repeat(np.arange(n_triangles), 3)
        cols = mesh.triangle_edges.ravel()
        vals = np.tile(LOCAL_EDGE_SIGNS, n_triangles)
        shape = (n_triangles, n_edges)
    else:
        raise ValueError(f"coboundary degree must be 0 or 1, got {k}")
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=shape)
    matrix.sort_indices()
    return IncidenceMatrix(matrix=matrix, degree=k)


def boundary_simplices(mesh: SimplicialMesh, k: int) -> np.ndarray:
    """Sorted indices of boundary vertices (k=0) or boundary edges (k=1)."""
    per_edge = np.bincount(mesh.triangle_edges.ravel(), minlength=len(mesh.edges))
    boundary_edges = np.flatnonzero(per_edge == 1)
    if k == 1:
        return boundary_edges
    if k == 0:
        return np.unique(mesh.edges[boundary_edges].ravel())
    raise ValueError(f"boundary simplices are defined for degree 0 or 1, got {k}")


def mesh_size(mesh: SimplicialMesh) -> float:
    """Maximum edge length."""
    p = mesh.vertices[mesh.edges]
    return float(np.max(np.linalg.norm(p[:, 1] - p[:, 0], axis=1)))


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].strip()


def read_mesh(path: Union[str, Path]) -> SimplicialMesh:
    """Read the `mesh2d V E F` text format."""
    lines = [_strip_comment(line) for line in Path(path).read_text(encoding="ascii").splitlines()]
    lines = [line for line in lines if line]
    if not lines:
        raise MeshFormatError(f"{path}: empty mesh file")

    header = lines[0].split()
    if len(header) != 4 or header[0] != "mesh2d":
        raise MeshFormatError(f"{path}: header must be 'mesh2d <V> <E> <F>', got '{lines[0]}'")
    try:
        n_vertices, n_edges, n_triangles = (int(tok) for tok in header[1:])
    except ValueError as e:
        raise MeshFormatError(f"{path}: non-integer counts in header") from e

    body = lines[1:]
    if len(body) != n_vertices + n_edges + n_triangles:
        raise MeshFormatError(
            f"{path}: expected {n_vertices + n_edges + n_triangles} records after the header, found {len(body)}"
        )

    def table(records, width, dtype):
        try:
            rows = [[dtype(tok) for tok in rec.split()] for rec in records]
        except ValueError as e:
            raise MeshFormatError(f"{path}: malformed record: {e}") from e
        if any(len(row) != width for row in rows):
            raise MeshFormatError(f"{path}: records must have {width} fields")
        return np.array(rows, dtype=dtype).reshape(-1, width)

    vertices = table(body[:n_vertices], 2, float)
    edges = table(body[n_vertices : n_vertices + n_edges], 2, int)
    triangles = table(body[n_vertices + n_edges :], 3, int)
    mesh = SimplicialMesh.from_triangles(vertices, triangles, domain=Domain.EXTERNAL, edges=edges)
    logger.info(f"Read mesh {path}: V,E,F = {mesh.counts}")
    return mesh


def format_mesh(mesh: SimplicialMesh) -> str:
    v, e, f = mesh.counts
    out = [f"mesh2d {v} {e} {f}"]
    out.extend(f"{x:.17g} {y:.17g}" for x, y in mesh.vertices)
    out.extend(f"{a} {b}" for a, b in mesh.edges)
    out.extend(f"{a} {b} {c}" for a, b, c in mesh.triangles)
    return "\n".join(out) + "\n"


def write_mesh(mesh: SimplicialMesh, path: Union[str, Path]) -> None:
    Path(path).write_text(format_mesh(mesh), encoding="ascii")
    logger.info(f"Wrote mesh {path}: V,E,F = {mesh.counts}")
