import numpy as np
import pytest

from hodgedirac.models.models import BoundaryCondition, Domain
from hodgedirac.services.complex import build_complex
from hodgedirac.services.mesh import SimplicialMesh, generate_mesh


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def triangle():
    """The unit right triangle (0,0), (1,0), (0,1)."""
    return SimplicialMesh.from_triangles([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


@pytest.fixture
def square2():
    return generate_mesh(Domain.SQUARE, 2)


@pytest.fixture(params=list(BoundaryCondition), ids=lambda bc: bc.value)
def bc(request):
    return request.param


@pytest.fixture
def square2_complex(square2, bc):
    return build_complex(square2, bc)


def dense(A):
    return A.toarray() if hasattr(A, "toarray") else np.asarray(A)


def m_inner(complex, x, y):
    return float(x @ (complex.M @ y))
