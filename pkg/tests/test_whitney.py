import math

import numpy as np
import pytest

from hodgedirac.models.models import BoundaryCondition, Domain
from hodgedirac.services.mesh import coboundary, generate_mesh
from hodgedirac.services.whitney import (
    TRIANGLE_RULES,
    AnalyticForm,
    assemble_mass,
    de_rham_map,
    free_dofs,
    interpolant_form,
    l2_error,
    load_vector,
    sample_field,
)


def test_zero_form_mass_on_right_triangle(triangle):
    M0 = assemble_mass(triangle, 0).toarray()
    expected = np.full((3, 3), 1 / 24) + np.eye(3) / 24
    np.testing.assert_allclose(M0, expected, rtol=1e-14)


def test_two_form_mass_on_right_triangle(triangle):
    np.testing.assert_allclose(assemble_mass(triangle, 2).toarray(), [[2.0]])


@pytest.mark.parametrize("a", [(1.0, 0.0), (0.0, 1.0), (2.0, -3.0)])
def test_one_form_mass_reproduces_constant_fields(a):
    mesh = generate_mesh(Domain.DISK, 3)
    c = de_rham_map(mesh, AnalyticForm(1, lambda x, y: a))
    M1 = assemble_mass(mesh, 1)
    area = mesh.areas.sum()
    assert c @ (M1 @ c) == pytest.approx((a[0] ** 2 + a[1] ** 2) * area, rel=1e-12)


@pytest.mark.parametrize("domain", [Domain.SQUARE, Domain.ANNULUS])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_mass_matrices_spd(domain, k, bc):
    mesh = generate_mesh(domain, 2)
    M = assemble_mass(mesh, k, bc).toarray()
    assert M.shape == (len(free_dofs(mesh, k, bc)),) * 2
    np.testing.assert_allclose(M, M.T, atol=1e-14 * np.abs(M).max())
    assert np.linalg.eigvalsh(M).min() > 0


def test_mass_condition_bounded_under_refinement():
    conds = [np.linalg.cond(assemble_mass(generate_mesh(Domain.SQUARE, n), 1).toarray()) for n in (2, 4, 8)]
    assert conds[2] / conds[1] < 10
    assert conds[1] / conds[0] < 10


def test_essential_mass_drops_boundary_dofs(triangle):
    assert assemble_mass(triangle, 0, BoundaryCondition.ESSENTIAL).shape == (0, 0)
    assert assemble_mass(triangle, 1, BoundaryCondition.ESSENTIAL).shape == (0, 0)
    assert assemble_mass(triangle, 2, BoundaryCondition.ESSENTIAL).shape == (1, 1)


def test_de_rham_of_constant_zero_form(square2):
    np.testing.assert_array_equal(de_rham_map(square2, AnalyticForm(0, lambda x, y: 1.0)), np.ones(9))


def test_de_rham_of_dx_on_edges(triangle):
    # edges (0,0)->(1,0), (0,0)->(0,1), (1,0)->(0,1)
    c = de_rham_map(triangle, AnalyticForm(1, lambda x, y: (1.0, 0.0)))
    np.testing.assert_allclose(c, [1.0, 0.0, -1.0], atol=1e-15)


ZERO_FORMS = [
    (lambda x, y: x * y, lambda x, y: (y, x)),
    (lambda x, y: x**3 - x * y**2, lambda x, y: (3 * x**2 - y**2, -2 * x * y)),
    (lambda x, y: 1 + x - 2 * y, lambda x, y: (np.ones_like(x), -2 * np.ones_like(x))),
    (lambda x, y: y**3, lambda x, y: (np.zeros_like(x), 3 * y**2)),
    (lambda x, y: x**2 * y, lambda x, y: (2 * x * y, x**2)),
    (lambda x, y: np.zeros_like(x), lambda x, y: (np.zeros_like(x), np.zeros_like(x))),
]

ONE_FORMS = [
    (lambda x, y: (x * y, x**2), lambda x, y: x),
    (lambda x, y: (y**3, x * y**2), lambda x, y: -2 * y**2),
    (lambda x, y: (-y, x), lambda x, y: 2 * np.ones_like(x)),
    (lambda x, y: (x**2, y**2), lambda x, y: np.zeros_like(x)),
    (lambda x, y: (x * y**2, x**3), lambda x, y: 3 * x**2 - 2 * x * y),
    (lambda x, y: (1 + y, 2 - x), lambda x, y: -2 * np.ones_like(x)),
]


@pytest.mark.parametrize("form, grad", ZERO_FORMS)
def test_de_rham_commutes_with_gradient(form, grad):
    mesh = generate_mesh(Domain.SQUARE, 8)
    d0 = coboundary(mesh, 0).matrix
    lhs = d0 @ de_rham_map(mesh, AnalyticForm(0, form))
    rhs = de_rham_map(mesh, AnalyticForm(1, grad))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


@pytest.mark.parametrize("form, curl", ONE_FORMS)
def test_de_rham_commutes_with_curl(form, curl):
    mesh = generate_mesh(Domain.SQUARE, 8)
    d1 = coboundary(mesh, 1).matrix
    lhs = d1 @ de_rham_map(mesh, AnalyticForm(1, form))
    rhs = de_rham_map(mesh, AnalyticForm(2, curl))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_load_vector_of_zero(square2):
    np.testing.assert_array_equal(load_vector(square2, 1, AnalyticForm(1, lambda x, y: (0.0, 0.0))), np.zeros(16))


def test_load_vector_of_one_on_right_triangle(triangle):
    np.testing.assert_allclose(load_vector(triangle, 0, AnalyticForm(0, lambda x, y: 1.0)), [1 / 6] * 3, rtol=1e-14)


def test_two_form_load_vector_on_disk():
    mesh = generate_mesh(Domain.DISK, 4)
    b = load_vector(mesh, 2, AnalyticForm(2, lambda x, y: x * y))
    p = mesh.vertices[mesh.triangles]
    # exact: int_T x y = |T|/12 (sum x_i y_i + sum x_i sum y_i), basis density s_T/|T|
    exact = (np.sum(p[..., 0] * p[..., 1], axis=1) + p[..., 0].sum(axis=1) * p[..., 1].sum(axis=1)) / 12
    np.testing.assert_allclose(b, mesh.orientation_signs * exact, atol=1e-15)


def test_sample_field_of_constant_one_form():
    mesh = generate_mesh(Domain.DISK, 3)
    samples = sample_field(mesh, 1, de_rham_map(mesh, AnalyticForm(1, lambda x, y: (1.0, 0.0))))
    np.testing.assert_allclose(samples, np.tile([1.0, 0.0], (len(mesh.triangles), 1)), atol=1e-12)


def test_sample_field_zero_and_identity(square2, rng):
    np.testing.assert_array_equal(sample_field(square2, 1, np.zeros(16)), np.zeros((8, 2)))
    c = rng.standard_normal(9)
    np.testing.assert_array_equal(sample_field(square2, 0, c), c)


def test_two_form_samples_are_densities(square2):
    c = de_rham_map(square2, AnalyticForm(2, lambda x, y: 3.0))
    np.testing.assert_allclose(sample_field(square2, 2, c), 3.0, rtol=1e-13)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_de_rham_of_interpolant_reproduces_cochain(k, rng):
    mesh = generate_mesh(Domain.SQUARE, 3)
    c = rng.standard_normal(mesh.counts[k])
    np.testing.assert_allclose(de_rham_map(mesh, interpolant_form(mesh, k, c)), c, atol=1e-12)


def test_l2_error_vanishes_for_linear_zero_form(square2):
    form = AnalyticForm(0, lambda x, y: x + 2 * y)
    assert l2_error(square2, 0, de_rham_map(square2, form), form) <= 1e-13


def test_l2_error_against_zero_is_the_norm(square2):
    form = AnalyticForm(2, lambda x, y: 2.0)
    assert l2_error(square2, 2, None, form) == pytest.approx(2.0)


@pytest.mark.parametrize("degree, rule", sorted(TRIANGLE_RULES.items()))
def test_quadrature_rules_exact_to_stated_degree(degree, rule):
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-15)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            # mean of l1^a l2^b over a triangle
            exact = 2 * math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            approx = np.sum(rule.weights * rule.points[:, 0] ** a * rule.points[:, 1] ** b)
            assert approx == pytest.approx(exact, rel=1e-13, abs=1e-15)
