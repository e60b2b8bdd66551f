"""Shared fixtures and helpers for the msmfe test suite."""

from __future__ import annotations

import numpy as np
import pytest

from msmfe.assembly import assemble, build_dof_map
from msmfe.manufactured import get_case
from msmfe.solver import (
    SolverConfig,
    eliminate_rotation,
    eliminate_stress,
    solve,
)


def solve_case(mesh, method, case_name="trig", solver="auto", tol=1e-12):
    """Run the full pipeline on one mesh; returns (dofmap, system, fields).

    Mirrors the CLI path: assemble, eliminate the stress block, eliminate the
    rotation block for msmfe1, then solve the reduced SPD system.
    """
    case = get_case(case_name)
    dofmap = build_dof_map(mesh, method)
    system = assemble(
        mesh,
        dofmap,
        case.compliance,
        case.body_force,
        case.displacement,
        method=method,
    )
    reduced = eliminate_stress(system, dofmap)
    if method == "msmfe1":
        reduced = eliminate_rotation(reduced)
    fields = solve(reduced, SolverConfig(kind=solver, tol=tol))
    return dofmap, system, fields


def random_convex_quad(rng, scale=0.25):
    """Corners of a random strictly convex quadrilateral, counterclockwise."""
    base = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    while True:
        corners = base + rng.uniform(-scale, scale, size=(4, 2))
        r21 = corners[1] - corners[0]
        r41 = corners[3] - corners[0]
        d = (corners[2] - corners[3]) - r21
        ok = True
        for k, (x, y) in enumerate(base):
            c1 = r21 + d * y
            c2 = r41 + d * x
            if c1[0] * c2[1] - c1[1] * c2[0] <= 1e-3:
                ok = False
                break
        if ok:
            return corners


@pytest.fixture(scope="session")
def trig_case():
    return get_case("trig")


@pytest.fixture(scope="session")
def linear_case():
    return get_case("linear")
