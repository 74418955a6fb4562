import math

import numpy as np
import pytest
import scipy.linalg

from hodgedirac.core.errors import EmptyComplement
from hodgedirac.models.models import BoundaryCondition, Domain
from hodgedirac.services.analysis import (
    CSV_COLUMNS,
    ConvergenceReport,
    LevelRecord,
    amplification,
    best_approx_error,
    convergence_study,
    infsup_constant,
    norms,
    observed_rates,
    poincare_constant,
    stability_constants,
)
from hodgedirac.services.complex import build_complex, harmonic_matrix
from hodgedirac.services import linalg
from hodgedirac.services.linalg import nullspace
from hodgedirac.services.mesh import generate_mesh
from hodgedirac.services.problems import get_problem
from hodgedirac.services.whitney import AnalyticForm, interpolant_form

from .conftest import dense


def _square(n, bc=BoundaryCondition.NATURAL):
    return build_complex(generate_mesh(Domain.SQUARE, n), bc)


def test_norms_of_zero(square2_complex):
    assert norms(square2_complex, square2_complex.cochain()) == (0.0, 0.0)


def test_norms_of_harmonic_cochain(square2_complex):
    cx = square2_complex
    w, v = norms(cx, cx.cochain(harmonic_matrix(cx)[:, 0]))
    assert w == pytest.approx(1.0)
    assert v == pytest.approx(w, rel=1e-12)


def test_v_norm_dominates(square2_complex, rng):
    cx = square2_complex
    x = cx.cochain(rng.standard_normal(cx.size))
    w, v = norms(cx, x)
    assert v >= w
    assert v >= norms(cx, cx.cochain(cx.D @ x.values))[0]


def _poincare_oracle(cx):
    Dd, Md = dense(cx.D), dense(cx.M)
    Z = nullspace(Dd, 1e-9)
    C = nullspace(Z.T @ Md, 1e-9)
    lam = scipy.linalg.eigh(C.T @ Dd.T @ Md @ Dd @ C, C.T @ Md @ C, eigvals_only=True)
    return math.sqrt(1 + 1 / lam.min())


def test_poincare_constant_on_single_triangle(triangle):
    cx = build_complex(triangle, BoundaryCondition.NATURAL)
    c_p = poincare_constant(cx)
    assert c_p == pytest.approx(_poincare_oracle(cx), rel=1e-10)
    assert c_p >= 1


def test_poincare_constant_matches_complement_oracle(square2_complex):
    assert poincare_constant(square2_complex) == pytest.approx(_poincare_oracle(square2_complex), rel=1e-9)


def test_poincare_needs_a_complement(triangle):
    with pytest.raises(EmptyComplement):
        poincare_constant(build_complex(triangle, BoundaryCondition.ESSENTIAL))


@pytest.mark.parametrize("domain", [Domain.SQUARE, Domain.ANNULUS])
def test_sparse_and_dense_constants_agree(domain, bc):
    cx = build_complex(generate_mesh(domain, 4 if domain == Domain.SQUARE else 2), bc)
    assert poincare_constant(cx, "sparse") == pytest.approx(poincare_constant(cx, "dense"), rel=1e-7)
    assert infsup_constant(cx, "sparse") == pytest.approx(infsup_constant(cx, "dense"), rel=1e-7)


def test_unknown_method_rejected(square2_complex):
    with pytest.raises(ValueError):
        poincare_constant(square2_complex, "magic")


def test_poincare_constant_bounded_under_refinement():
    values = [poincare_constant(_square(n)) for n in (4, 8, 16)]
    assert min(values) >= 1
    for a, b in zip(values, values[1:]):
        assert 1 / 1.1 <= b / a <= 1.1


@pytest.mark.parametrize("domain", [Domain.SQUARE, Domain.DISK, Domain.ANNULUS])
def test_infsup_positive(domain, bc):
    cx = build_complex(generate_mesh(domain, 2), bc)
    assert infsup_constant(cx) > 0


@pytest.mark.slow
def test_infsup_uniform_under_refinement():
    # n = 32 exceeds dense_eig_limit and runs through shift-invert
    gammas = [infsup_constant(_square(n)) for n in (4, 8, 16, 32)]
    assert min(gammas) >= 0.5 * max(gammas)


def test_stability_constants_record_ratio(square2_complex):
    constants = stability_constants(square2_complex)
    assert constants.c_P >= 1 and constants.gamma_h > 0
    assert constants.ratio == pytest.approx(constants.gamma_h * constants.c_P**2)
    assert constants.domain == Domain.SQUARE and constants.resolution == 2


@pytest.mark.parametrize("n", [2, 3])
def test_amplification_bounded_by_infsup(n, bc, rng):
    cx = _square(n, bc)
    gamma = infsup_constant(cx)
    amp = amplification(cx, samples=20, rng=rng)
    assert 0 < amp.product <= 1.01 / gamma
    assert amp.product <= amp.total <= 1.01 * math.sqrt(2) / gamma
    assert amp.residual <= 1e-9


def test_amplification_passes_tolerance_to_solves(square2_complex, monkeypatch):
    seen = []
    solve = linalg.solve_symmetric_indefinite

    def recording_solve(A, b, tol=None, refine_steps=None):
        seen.append(tol)
        return solve(A, b, tol=tol, refine_steps=refine_steps)

    monkeypatch.setattr(linalg, "solve_symmetric_indefinite", recording_solve)
    amplification(square2_complex, samples=2, tol=1e-12)
    assert seen and all(tol == 1e-12 for tol in seen)


def test_best_approximation_of_constant(square2_complex):
    w = AnalyticForm(2, lambda x, y: 4.0)
    assert best_approx_error(square2_complex, w) <= 1e-12


def test_best_approximation_of_whitney_field(square2, rng):
    cx = build_complex(square2, BoundaryCondition.NATURAL)
    w = interpolant_form(square2, 1, rng.standard_normal(square2.counts[1]))
    assert best_approx_error(cx, w) <= 1e-10


def test_best_approximation_rate_for_zero_forms():
    w = AnalyticForm(0, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    errors = [best_approx_error(_square(n), w) for n in (8, 16)]
    assert 1.8 <= math.log2(errors[0] / errors[1]) <= 2.2


def test_observed_rates():
    np.testing.assert_allclose(observed_rates([1.0, 0.5, 0.25], [1.0, 0.25, 0.0625]), [2.0, 2.0])
    assert math.isnan(observed_rates([1.0, 0.5], [0.0, 0.0])[0])


def test_report_csv_layout():
    report = ConvergenceReport(domain=Domain.SQUARE, bc=BoundaryCondition.NATURAL, problem="test")
    for level, h in enumerate((0.5, 0.25)):
        errors = dict.fromkeys(CSV_COLUMNS[1:], h)
        report.levels.append(LevelRecord(level=level, resolution=2 ** (level + 1), h=h, residual=0.0, n_unknowns=1, **errors))
    lines = report.to_csv().splitlines()
    assert lines[0] == "h,errW_u,errV_u,err_du,err_p,err_Bpart,err_Bstarpart"
    assert lines[1].split(",") == ["0.5"] * 7
    assert lines[-1] == "rates," + ",".join(["1"] * 6)
    assert len(lines) == 4


def test_harmonic_problem_has_no_error(bc):
    report = convergence_study(Domain.SQUARE, bc, "harmonic", levels=2, base_resolution=2)
    for rec in report.levels:
        for name in CSV_COLUMNS[1:]:
            assert getattr(rec, name) <= 1e-10


def test_du_error_is_the_best_approximation():
    problem = get_problem("smooth1", Domain.SQUARE, BoundaryCondition.NATURAL)
    report = convergence_study(Domain.SQUARE, BoundaryCondition.NATURAL, problem, levels=2, base_resolution=4)
    for rec in report.levels:
        cx = _square(rec.resolution)
        assert rec.err_du == pytest.approx(best_approx_error(cx, problem.du.two), rel=1e-8)


@pytest.mark.slow
def test_smooth_problem_converges_at_first_order():
    report = convergence_study(Domain.SQUARE, BoundaryCondition.NATURAL, "smooth1", levels=4, base_resolution=4)
    assert [rec.resolution for rec in report.levels] == [4, 8, 16, 32]
    assert all(a.h > b.h for a, b in zip(report.levels, report.levels[1:]))
    assert 0.8 <= report.final_rates["errV_u"] <= 1.2
    assert 0.8 <= report.final_rates["err_du"] <= 1.2
    # exact p vanishes; only quadrature error of the source reaches the harmonic block
    err_p = report.column("err_p")
    assert max(err_p) <= 1e-3
    assert all(a > b for a, b in zip(err_p, err_p[1:]))


def test_swirl_errors_decrease(bc):
    report = convergence_study(Domain.DISK, bc, "swirl", levels=3, base_resolution=2)
    errV = report.column("errV_u")
    assert errV[0] > errV[1] > errV[2]


def test_mismatched_problem_domain():
    with pytest.raises(ValueError):
        convergence_study(Domain.DISK, BoundaryCondition.NATURAL, "smooth1", levels=2)
