"""Vertex-block elimination, reduced SPD solves, and the saddle-point oracle."""

from __future__ import annotations

import numpy as np
import pytest

from conftest import solve_case
from msmfe.assembly import assemble, build_dof_map
from msmfe.manufactured import get_case
from msmfe.mesh import generate_smooth, generate_uniform
from msmfe.solver import (
    SolverConfig,
    _pcg,
    constraint_residuals,
    eliminate_rotation,
    eliminate_stress,
    saddle_residual,
    solve,
    solve_saddle_oracle,
)


def _assembled(mesh, method, case_name="trig"):
    case = get_case(case_name)
    dofmap = build_dof_map(mesh, method)
    return dofmap, assemble(
        mesh, dofmap, case.compliance, case.body_force, case.displacement
    )


# -- elimination --------------------------------------------------------------


def test_single_cell_elimination_cache():
    _, system = _assembled(generate_uniform(1), "msmfe0")
    reduced = eliminate_stress(system)
    cache = reduced.elimination_cache
    assert np.array_equal(cache.block_sizes, [4, 4, 4, 4])
    assert cache.chol_vals.shape == (4 * 16,)
    assert reduced.schur_matrix.shape == (3, 3)


def test_reduced_sizes():
    n = 4
    mesh = generate_uniform(n)
    _, sys0 = _assembled(mesh, "msmfe0")
    red0 = eliminate_stress(sys0)
    assert red0.schur_matrix.shape == (3 * n * n, 3 * n * n)
    assert red0.n_rotation == n * n

    _, sys1 = _assembled(mesh, "msmfe1")
    red1 = eliminate_rotation(eliminate_stress(sys1))
    assert red1.schur_matrix.shape == (2 * n * n, 2 * n * n)
    assert red1.n_rotation == 0
    assert red1.rotation_dofs == (n + 1) ** 2


def test_rotation_elimination_guards():
    mesh = generate_uniform(2)
    _, sys0 = _assembled(mesh, "msmfe0")
    with pytest.raises(ValueError, match="msmfe1"):
        eliminate_rotation(eliminate_stress(sys0))
    _, sys1 = _assembled(mesh, "msmfe1")
    once = eliminate_rotation(eliminate_stress(sys1))
    with pytest.raises(ValueError, match="already"):
        eliminate_rotation(once)


def test_reduced_matrix_spd():
    for method in ("msmfe0", "msmfe1"):
        for maker in (generate_uniform, generate_smooth):
            _, system = _assembled(maker(4), method)
            reduced = eliminate_stress(system)
            if method == "msmfe1":
                reduced = eliminate_rotation(reduced)
            dense = reduced.schur_matrix.toarray()
            assert np.abs(dense - dense.T).max() < 1e-13 * np.abs(dense).max()
            np.linalg.cholesky(dense)


def test_rotation_block_diagonal_positive():
    _, system = _assembled(generate_smooth(4), "msmfe1")
    reduced = eliminate_stress(system)
    nu = reduced.n_displacement
    rot = reduced.schur_matrix[nu:, nu:].tocoo()
    off = rot.row != rot.col
    assert np.abs(rot.data[off]).max(initial=0.0) <= 1e-12 * rot.diagonal().max()
    assert rot.diagonal().min() > 0


# -- agreement with the saddle-point oracle ----------------------------------------


@pytest.mark.parametrize("method", ["msmfe0", "msmfe1"])
@pytest.mark.parametrize("maker", [generate_uniform, generate_smooth])
@pytest.mark.parametrize("n", [2, 4])
def test_reduction_matches_saddle_oracle(method, maker, n):
    mesh = maker(n)
    _, system = _assembled(mesh, method)
    oracle = solve_saddle_oracle(system)
    _, _, fields = solve_case(mesh, method)
    scale = max(1.0, np.abs(oracle.stress_coeffs).max())
    assert np.abs(fields.stress_coeffs - oracle.stress_coeffs).max() < 1e-8 * scale
    assert np.abs(fields.displacement - oracle.displacement).max() < 1e-8
    assert np.abs(fields.rotation - oracle.rotation).max() < 1e-8


def test_oracle_guard_on_large_systems():
    mesh = generate_uniform(48)
    _, system = _assembled(mesh, "msmfe1")
    with pytest.raises(ValueError, match="oracle"):
        solve_saddle_oracle(system)


# -- solver paths -------------------------------------------------------------------


def test_zero_loads_give_zero_solution():
    mesh = generate_smooth(2)
    dofmap = build_dof_map(mesh, "msmfe1")
    case = get_case("trig")
    zero = lambda pts: np.zeros_like(np.asarray(pts, dtype=float))
    system = assemble(mesh, dofmap, case.compliance, zero, zero)
    reduced = eliminate_rotation(eliminate_stress(system))
    fields = solve(reduced, SolverConfig(kind="cg"))
    assert np.array_equal(fields.stress_coeffs, np.zeros(dofmap.n_stress))
    assert np.array_equal(fields.displacement, np.zeros((mesh.n_cells, 2)))
    assert np.array_equal(fields.rotation, np.zeros(dofmap.n_rotation))


def test_pcg_zero_rhs_short_circuits():
    import scipy.sparse as sp

    mat = sp.eye(5, format="csr")
    x, iters = _pcg(mat, np.zeros(5), tol=1e-12, max_iters=10)
    assert iters == 0
    assert np.array_equal(x, np.zeros(5))


def test_cg_agrees_with_direct():
    mesh = generate_smooth(8)
    _, _, direct = solve_case(mesh, "msmfe1", solver="cholesky")
    _, _, iterative = solve_case(mesh, "msmfe1", solver="cg", tol=1e-13)
    scale = np.abs(direct.stress_coeffs).max()
    assert np.abs(direct.stress_coeffs - iterative.stress_coeffs).max() < 1e-8 * scale
    assert np.abs(direct.displacement - iterative.displacement).max() < 1e-10


def test_cg_nonconvergence_raises():
    mesh = generate_uniform(4)
    _, system = _assembled(mesh, "msmfe0")
    reduced = eliminate_stress(system)
    with pytest.raises(RuntimeError, match="did not converge"):
        solve(reduced, SolverConfig(kind="cg", tol=1e-16, max_iters=1))


def test_unknown_solver_kind_rejected():
    mesh = generate_uniform(2)
    _, system = _assembled(mesh, "msmfe0")
    reduced = eliminate_stress(system)
    with pytest.raises(ValueError, match="solver kind"):
        solve(reduced, SolverConfig(kind="lu"))


# -- solution certificates -----------------------------------------------------------


@pytest.mark.parametrize("method", ["msmfe0", "msmfe1"])
def test_constraints_hold_at_solution(method):
    mesh = generate_smooth(8)
    _, system, fields = solve_case(mesh, method)
    div_res, sym_res = constraint_residuals(system, fields)
    force_scale = np.abs(system.rhs_body).max()
    assert np.abs(div_res).max() < 1e-9 * force_scale
    assert np.abs(sym_res).max() < 1e-10 * max(1.0, np.abs(fields.stress_coeffs).max())


@pytest.mark.parametrize("method", ["msmfe0", "msmfe1"])
def test_saddle_residual_small(method):
    mesh = generate_uniform(4)
    _, system, fields = solve_case(mesh, method)
    scale = max(
        1.0, np.abs(system.rhs_boundary).max(), np.abs(system.rhs_body).max()
    )
    assert saddle_residual(system, fields) < 1e-8 * scale


def test_solution_scales_linearly():
    mesh = generate_smooth(4)
    case = get_case("trig")
    dofmap = build_dof_map(mesh, "msmfe1")
    s = 2.5

    def scaled_force(pts):
        return s * case.body_force(pts)

    def scaled_data(pts):
        return s * case.displacement(pts)

    base = assemble(
        mesh, dofmap, case.compliance, case.body_force, case.displacement
    )
    scaled = assemble(mesh, dofmap, case.compliance, scaled_force, scaled_data)
    f_base = solve(eliminate_rotation(eliminate_stress(base)))
    f_scaled = solve(eliminate_rotation(eliminate_stress(scaled)))
    ref = np.abs(f_base.stress_coeffs).max()
    assert np.abs(f_scaled.stress_coeffs - s * f_base.stress_coeffs).max() < 1e-12 * ref * s
    assert np.allclose(f_scaled.displacement, s * f_base.displacement, atol=1e-12)
    assert np.allclose(f_scaled.rotation, s * f_base.rotation, atol=1e-12)
