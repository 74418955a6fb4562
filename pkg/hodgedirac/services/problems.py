"""
Manufactured Hodge-Dirac problems with exact solutions.

Each problem carries the exact u, its exterior derivative du, the harmonic
part p of the source and the source f = (d + d*) u + p, all as GradedForms.
For a 1-form u = (u1, u2): d*u = -div u (a 0-form) and du = curl u dx^dy.
"""
from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np

from hodgedirac.models.models import BoundaryCondition, Domain
from hodgedirac.services.whitney import AnalyticForm, GradedForm

PI = np.pi


@dataclass(frozen=True)
class ManufacturedProblem:
    name: str
    domain: Domain
    bc: BoundaryCondition
    u: GradedForm
    du: GradedForm
    p: GradedForm
    f: GradedForm


def _smooth1(domain: Domain, bc: BoundaryCondition) -> ManufacturedProblem:
    if domain != Domain.SQUARE:
        raise ValueError(f"problem 'smooth1' is posed on the square, not {domain.value}")
    if bc == BoundaryCondition.NATURAL:
        # u . n = 0 on every side
        u = lambda x, y: (np.sin(PI * x) * (1 + y), np.sin(PI * y) * x**2)
        div = lambda x, y: PI * np.cos(PI * x) * (1 + y) + PI * np.cos(PI * y) * x**2
        curl = lambda x, y: 2 * x * np.sin(PI * y) - np.sin(PI * x)
    else:
        # u x n = 0 on every side
        u = lambda x, y: (np.sin(PI * y) * (1 + x), np.sin(PI * x) * y**2)
        div = lambda x, y: np.sin(PI * y) + 2 * y * np.sin(PI * x)
        curl = lambda x, y: PI * np.cos(PI * x) * y**2 - PI * np.cos(PI * y) * (1 + x)
    return _one_form_problem("smooth1", domain, bc, u, div, curl)


def _swirl(domain: Domain, bc: BoundaryCondition) -> ManufacturedProblem:
    if domain != Domain.DISK:
        raise ValueError(f"problem 'swirl' is posed on the disk, not {domain.value}")
    # vanishes on the unit circle, so it satisfies both boundary conditions
    u = lambda x, y: ((1 - x**2 - y**2) * -y, (1 - x**2 - y**2) * x)
    div = lambda x, y: np.zeros_like(x)
    curl = lambda x, y: 2 - 4 * (x**2 + y**2)
    return _one_form_problem("swirl", domain, bc, u, div, curl)


def _one_form_problem(name, domain, bc, u, div, curl) -> ManufacturedProblem:
    neg_div = lambda x, y: -div(x, y)
    return ManufacturedProblem(
        name=name,
        domain=domain,
        bc=bc,
        u=GradedForm(one=AnalyticForm(1, u)),
        du=GradedForm(two=AnalyticForm(2, curl)),
        p=GradedForm(),
        f=GradedForm(zero=AnalyticForm(0, neg_div), two=AnalyticForm(2, curl)),
    )


def _harmonic(domain: Domain, bc: BoundaryCondition) -> ManufacturedProblem:
    one = lambda x, y: np.ones_like(x)
    if bc == BoundaryCondition.NATURAL:
        p = GradedForm(zero=AnalyticForm(0, one))
    else:
        p = GradedForm(two=AnalyticForm(2, one))
    return ManufacturedProblem(name="harmonic", domain=domain, bc=bc, u=GradedForm(), du=GradedForm(), p=p, f=p)


PROBLEMS: Dict[str, Callable[[Domain, BoundaryCondition], ManufacturedProblem]] = {
    "smooth1": _smooth1,
    "swirl": _swirl,
    "harmonic": _harmonic,
}


def get_problem(name: str, domain: Domain, bc: BoundaryCondition) -> ManufacturedProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem '{name}' (available: {', '.join(sorted(PROBLEMS))})") from None
    return factory(Domain(domain), BoundaryCondition(bc))
