"""Multipoint-stress mixed finite elements for planar linear elasticity.

Mixed stress/displacement/rotation discretization on quadrilateral grids in
which a vertex quadrature rule block-diagonalizes the stress mass matrix, so
the stress (and optionally the rotation) unknowns are eliminated locally,
leaving a symmetric positive definite cell-centered system.  Two method
variants are provided: ``msmfe0`` (piecewise-constant rotations) and
``msmfe1`` (continuous bilinear rotations, fully reducible to a
displacement-only system).

Typical use::

    from msmfe import (assemble, build_dof_map, compute_errors, generate_uniform,
                       eliminate_rotation, eliminate_stress, get_case, solve)

    mesh = generate_uniform(16)
    case = get_case("trig")
    dofmap = build_dof_map(mesh, "msmfe1")
    system = assemble(mesh, dofmap, case.compliance, case.body_force,
                      case.displacement)
    fields = solve(eliminate_rotation(eliminate_stress(system)))
    report = compute_errors(mesh, fields, case)

The command-line front end (``msmfe converge | run | mesh-report``) drives
the same pipeline over refinement sequences of several mesh families.
"""

from ._kernels import active_backend, available_backends, use_backend
from .analysis import (
    ConvergenceTable,
    ErrorReport,
    TableRow,
    compute_errors,
    compute_rates,
)
from .assembly import (
    METHOD_TAGS,
    AssembledSystem,
    DofMap,
    assemble,
    build_dof_map,
    project_p0_boundary,
)
from .manufactured import (
    IsotropicCompliance,
    ManufacturedCase,
    evaluate_case,
    get_case,
    list_cases,
)
from .mesh import (
    MeshQualityReport,
    QuadMesh,
    generate_smooth,
    generate_uniform,
    load_h2par_seed,
    quality_report,
    read_mesh,
    refine_uniform,
    write_mesh,
)
from .solver import (
    ReducedSystem,
    SolutionFields,
    SolverConfig,
    constraint_residuals,
    eliminate_rotation,
    eliminate_stress,
    saddle_residual,
    solve,
    solve_saddle_oracle,
)

__version__ = "0.1.0"

__all__ = [
    "METHOD_TAGS",
    "AssembledSystem",
    "ConvergenceTable",
    "DofMap",
    "ErrorReport",
    "IsotropicCompliance",
    "ManufacturedCase",
    "MeshQualityReport",
    "QuadMesh",
    "ReducedSystem",
    "SolutionFields",
    "SolverConfig",
    "TableRow",
    "active_backend",
    "assemble",
    "available_backends",
    "build_dof_map",
    "compute_errors",
    "compute_rates",
    "constraint_residuals",
    "eliminate_rotation",
    "eliminate_stress",
    "evaluate_case",
    "generate_smooth",
    "generate_uniform",
    "get_case",
    "list_cases",
    "load_h2par_seed",
    "project_p0_boundary",
    "quality_report",
    "read_mesh",
    "refine_uniform",
    "saddle_residual",
    "solve",
    "solve_saddle_oracle",
    "use_backend",
    "write_mesh",
    "__version__",
]
