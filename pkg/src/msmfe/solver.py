"""Reduction of the saddle-point system to SPD cell-centered form and solves.

Pipeline:

1. ``eliminate_stress`` factors every (small, SPD) vertex block of the
   stress matrix and forms the Schur complement over the displacement and
   rotation unknowns, plus the cache needed to recover the stress later.
2. ``eliminate_rotation`` (msmfe1 only) removes the rotation unknowns, whose
   Schur block is diagonal because each rotation row couples a single vertex
   block, leaving a displacement-only SPD system.
3. ``solve`` runs either a sparse direct factorization or Jacobi-
   preconditioned conjugate gradients, then back-substitutes rotation and
   stress.

``solve_saddle_oracle`` solves the full indefinite block system directly and
serves as the reference in equivalence tests; the reduction is algebraically
exact, so both paths agree to solver precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._kernels import get_kernels
from .assembly import AssembledSystem, DofMap

__all__ = [
    "EliminationCache",
    "RotationRecovery",
    "ReducedSystem",
    "SolverConfig",
    "SolutionFields",
    "eliminate_stress",
    "eliminate_rotation",
    "solve",
    "solve_saddle_oracle",
    "constraint_residuals",
    "saddle_residual",
]

#: Below this unknown count the automatic solver picks direct factorization.
_DIRECT_LIMIT = 50_000

#: Guard for the monolithic oracle solver.
_ORACLE_LIMIT = 20_000


@dataclass
class EliminationCache:
    """Per-vertex factorization data for stress recovery.

    All arrays use the packed layouts produced by the elimination kernel:
    ``chol_vals`` mirrors the packed block storage (lower triangles),
    ``z_mat`` holds the row-major (block size x coupled rows) matrices
    L^{-1} B^T, and ``row_map``/``row_off`` list each block's coupled
    reduced-system rows.
    """

    block_ptr: np.ndarray
    block_offsets: np.ndarray
    block_sizes: np.ndarray
    chol_vals: np.ndarray
    z_all: np.ndarray
    row_off: np.ndarray
    row_map: np.ndarray
    z_off: np.ndarray
    z_mat: np.ndarray


@dataclass
class RotationRecovery:
    """Cache for recovering rotations eliminated from the reduced system."""

    coupling: sp.csr_matrix  # displacement-rotation block of the Schur matrix
    diag: np.ndarray  # the diagonal rotation block
    rhs_rotation: np.ndarray  # rotation rows of the reduced rhs


@dataclass
class ReducedSystem:
    """SPD reduced system over cell/vertex unknowns plus recovery caches.

    ``schur_matrix`` couples displacement then rotation unknowns (rotation
    absent after :func:`eliminate_rotation`, recorded by ``n_rotation`` = 0).
    """

    schur_matrix: sp.csr_matrix
    schur_rhs: np.ndarray
    elimination_cache: EliminationCache = field(repr=False)
    method_tag: str
    n_cells: int
    n_displacement: int
    n_rotation: int
    rotation_dofs: int
    rotation_recovery: RotationRecovery | None = field(default=None, repr=False)


@dataclass
class SolverConfig:
    """Linear-solver selection: kind in {"auto", "cg", "cholesky"}.

    "cholesky" runs a sparse direct factorization; "cg" runs Jacobi-
    preconditioned conjugate gradients to relative residual ``tol``;
    "auto" picks direct below 50k unknowns and cg above.
    """

    kind: str = "auto"
    tol: float = 1e-12
    max_iters: int | None = None


@dataclass
class SolutionFields:
    """Recovered discrete solution triple.

    Attributes
    ----------
    stress_coeffs : (n_stress,) float array
        Nodal stress coefficients in the vertex-grouped numbering
        (constrained zero-traction DOFs are eliminated, hence exactly zero).
    displacement : (n_cells, 2) float array
    rotation : float array
        Scalar rotation unknowns: per cell (msmfe0) or per vertex (msmfe1).
        The skew tensor at scalar p is [[0, p], [-p, 0]].
    method_tag : str
    """

    stress_coeffs: np.ndarray
    displacement: np.ndarray
    rotation: np.ndarray
    method_tag: str


def eliminate_stress(system: AssembledSystem, dofmap: DofMap | None = None) -> ReducedSystem:
    """Eliminate all stress unknowns via per-vertex Cholesky factorizations.

    Never forms a global inverse: loops vertex blocks, forming the Schur
    complement B A^{-1} B^T over (displacement, rotation) and the reduced
    right-hand side.  Raises if any block is not positive definite.
    """
    dm = dofmap if dofmap is not None else system.dofmap
    bmat = system.constraint_matrix()
    n_rows = dm.n_displacement + dm.n_rotation
    kernels = get_kernels()
    try:
        (
            chol_vals,
            z_all,
            row_off,
            row_map,
            z_off,
            z_mat,
            trip_off,
            trip_i,
            trip_j,
            trip_val,
            rhs_add,
        ) = kernels.eliminate_vertex_blocks(
            dm.block_ptr,
            dm.block_offsets,
            dm.block_sizes,
            system.stress_blocks,
            bmat.indptr.astype(np.int64),
            bmat.indices.astype(np.int64),
            bmat.data.astype(np.float64),
            system.rhs_boundary,
            n_rows,
        )
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(
            "a stress vertex block is not positive definite "
            "(degenerate mesh or invalid compliance)"
        ) from exc

    schur = sp.coo_matrix(
        (trip_val, (trip_i, trip_j)), shape=(n_rows, n_rows)
    ).tocsr()
    rhs = rhs_add - np.concatenate([system.rhs_body, np.zeros(dm.n_rotation)])
    cache = EliminationCache(
        block_ptr=dm.block_ptr,
        block_offsets=dm.block_offsets,
        block_sizes=dm.block_sizes,
        chol_vals=chol_vals,
        z_all=z_all,
        row_off=row_off,
        row_map=row_map,
        z_off=z_off,
        z_mat=z_mat,
    )
    return ReducedSystem(
        schur_matrix=schur,
        schur_rhs=rhs,
        elimination_cache=cache,
        method_tag=system.method_tag,
        n_cells=dm.mesh.n_cells,
        n_displacement=dm.n_displacement,
        n_rotation=dm.n_rotation,
        rotation_dofs=dm.n_rotation,
    )


def eliminate_rotation(reduced: ReducedSystem) -> ReducedSystem:
    """Remove the rotation unknowns of an msmfe1 reduced system.

    The rotation Schur block is diagonal (each rotation row touches exactly
    one vertex block), so its elimination is a diagonal scaling.  Raises for
    msmfe0 input, a structurally non-diagonal rotation block, or a
    nonpositive diagonal entry.
    """
    if reduced.method_tag != "msmfe1":
        raise ValueError("rotation elimination requires the msmfe1 reduced system")
    if reduced.n_rotation == 0:
        raise ValueError("rotation unknowns were already eliminated")
    nu = reduced.n_displacement
    smat = reduced.schur_matrix
    disp_block = smat[:nu, :nu].tocsr()
    coupling = smat[:nu, nu:].tocsr()
    rot_block = smat[nu:, nu:].tocoo()

    diag = rot_block.diagonal()
    off = rot_block.row != rot_block.col
    if np.any(off) and np.abs(rot_block.data[off]).max() > 1e-12 * diag.max():
        raise RuntimeError("rotation block is not diagonal (assembly bug)")
    if np.any(diag <= 0):
        raise RuntimeError("rotation block has a nonpositive diagonal entry")

    rhs_rot = reduced.schur_rhs[nu:]
    scaled = coupling.multiply(1.0 / diag[None, :]).tocsr()
    new_matrix = (disp_block - scaled @ coupling.T).tocsr()
    new_rhs = reduced.schur_rhs[:nu] - scaled @ rhs_rot
    return ReducedSystem(
        schur_matrix=new_matrix,
        schur_rhs=new_rhs,
        elimination_cache=reduced.elimination_cache,
        method_tag=reduced.method_tag,
        n_cells=reduced.n_cells,
        n_displacement=nu,
        n_rotation=0,
        rotation_dofs=reduced.rotation_dofs,
        rotation_recovery=RotationRecovery(
            coupling=coupling, diag=diag, rhs_rotation=rhs_rot
        ),
    )


def _pcg(matrix, rhs, tol: float, max_iters: int):
    """Jacobi-preconditioned conjugate gradients.

    Returns (solution, iterations); raises RuntimeError on non-convergence.
    The relative residual target is ||r|| <= tol * ||rhs||.
    """
    rhs_norm = np.linalg.norm(rhs)
    x = np.zeros_like(rhs)
    if rhs_norm == 0.0:
        return x, 0
    inv_diag = 1.0 / matrix.diagonal()
    r = rhs.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iters + 1):
        ap = matrix @ p
        alpha = rz / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        if np.linalg.norm(r) <= tol * rhs_norm:
            return x, it
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise RuntimeError(f"cg did not converge in {max_iters} iterations")


def solve(reduced: ReducedSystem, config: SolverConfig | None = None) -> SolutionFields:
    """Solve the reduced SPD system and back-substitute all fields."""
    cfg = config if config is not None else SolverConfig()
    n = len(reduced.schur_rhs)
    kind = cfg.kind
    if kind == "auto":
        kind = "cholesky" if n < _DIRECT_LIMIT else "cg"
    if kind == "cholesky":
        y = spla.splu(reduced.schur_matrix.tocsc()).solve(reduced.schur_rhs)
    elif kind == "cg":
        max_iters = cfg.max_iters if cfg.max_iters is not None else 10 * n
        y, _ = _pcg(reduced.schur_matrix, reduced.schur_rhs, cfg.tol, max_iters)
    else:
        raise ValueError(f"unknown solver kind {cfg.kind!r}")

    if reduced.rotation_recovery is not None:
        rec = reduced.rotation_recovery
        rotation = (rec.rhs_rotation - rec.coupling.T @ y) / rec.diag
        displacement = y
        y_full = np.concatenate([y, rotation])
    else:
        displacement = y[: reduced.n_displacement]
        rotation = y[reduced.n_displacement :]
        y_full = y

    cache = reduced.elimination_cache
    kernels = get_kernels()
    sigma = kernels.recover_stress(
        cache.block_ptr,
        cache.block_offsets,
        cache.block_sizes,
        cache.chol_vals,
        cache.z_all,
        cache.row_off,
        cache.row_map,
        cache.z_off,
        cache.z_mat,
        y_full,
    )
    return SolutionFields(
        stress_coeffs=sigma,
        displacement=displacement.reshape(reduced.n_cells, 2).copy(),
        rotation=rotation.copy(),
        method_tag=reduced.method_tag,
    )


def solve_saddle_oracle(system: AssembledSystem) -> SolutionFields:
    """Solve the full indefinite block system directly (reference path).

    Assembles [[A, B^T], [B, 0]] over (stress; displacement, rotation) and
    solves it with a sparse direct method.  Guarded to small problems; the
    reduced pipeline must agree with this to solver precision.
    """
    dm = system.dofmap
    total = dm.n_stress + dm.n_displacement + dm.n_rotation
    if total > _ORACLE_LIMIT:
        raise ValueError(
            f"saddle oracle limited to {_ORACLE_LIMIT} unknowns, got {total}"
        )
    amat = system.stress_matrix()
    bmat = system.constraint_matrix().tocsr()
    kmat = sp.bmat([[amat, bmat.T], [bmat, None]], format="csc")
    rhs = np.concatenate(
        [system.rhs_boundary, system.rhs_body, np.zeros(dm.n_rotation)]
    )
    x = spla.spsolve(kmat, rhs)
    if not np.all(np.isfinite(x)):
        raise RuntimeError("saddle system solve failed (singular system)")
    ns, nu = dm.n_stress, dm.n_displacement
    return SolutionFields(
        stress_coeffs=x[:ns],
        displacement=x[ns : ns + nu].reshape(dm.mesh.n_cells, 2).copy(),
        rotation=x[ns + nu :].copy(),
        method_tag=system.method_tag,
    )


def constraint_residuals(system: AssembledSystem, fields: SolutionFields):
    """Residuals of the two constraint equations at a solution.

    Returns (divergence residual per displacement DOF, rotation-pairing
    residual per rotation DOF): the first is (div sigma_h, v) - (f, v), the
    second the weak-symmetry pairing of the discrete stress.
    """
    div_res = system.div_pairing @ fields.stress_coeffs - system.rhs_body
    sym_res = system.rotation_pairing @ fields.stress_coeffs
    return div_res, sym_res


def saddle_residual(system: AssembledSystem, fields: SolutionFields) -> float:
    """Max-norm residual of the full saddle-point system at a solution."""
    y = np.concatenate([fields.displacement.ravel(), fields.rotation])
    bmat = system.constraint_matrix().tocsr()
    r1 = (
        system.stress_matrix() @ fields.stress_coeffs
        + bmat.T @ y
        - system.rhs_boundary
    )
    r2 = bmat @ fields.stress_coeffs - np.concatenate(
        [system.rhs_body, np.zeros(system.dofmap.n_rotation)]
    )
    return max(
        float(np.abs(r1).max(initial=0.0)), float(np.abs(r2).max(initial=0.0))
    )
