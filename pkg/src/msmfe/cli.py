"""Command-line front end: convergence studies, single solves, mesh reports.

Subcommands
-----------
converge
    Build each mesh level of a family, solve, compute error norms, print the
    convergence table, and optionally write it as CSV.
run
    One solve on the first requested level; optionally export the fields to
    a legacy-ASCII VTK file (cell displacement, cell/point rotation, and
    point-sampled stress rows).
mesh-report
    Print distortion diagnostics per level and warn when the second-order
    regularity ratio grows materially across refinements.

Every flag may also come from a ``key = value`` config file (``--config``);
explicit flags win over file values.
"""

from __future__ import annotations

import argparse
import logging
from dataclasses import dataclass

import numpy as np

from .analysis import (
    ConvergenceTable,
    _local_stress_coefficients,
    _mapped_quadrature,
    compute_errors,
    compute_rates,
)
from .assembly import METHOD_TAGS, assemble, build_dof_map
from .manufactured import get_case, list_cases
from .mesh import (
    QuadMesh,
    generate_smooth,
    generate_uniform,
    load_h2par_seed,
    quality_report,
    read_mesh,
    refine_uniform,
)
from .reference import REF_CORNERS, reference_basis
from .solver import SolverConfig, eliminate_rotation, eliminate_stress, solve

__all__ = ["RunConfig", "cmd_converge", "cmd_run", "cmd_mesh_report", "main"]

logger = logging.getLogger("msmfe")

_FAMILIES = ("square", "smooth", "h2par", "file")
_SOLVER_KINDS = ("auto", "cg", "cholesky")


@dataclass
class RunConfig:
    """Validated options for one CLI invocation.

    ``family`` accepts the shorthand ``file:<path>``, normalized into
    ``family="file"`` plus ``mesh_file``.
    """

    method: str = "msmfe1"
    family: str = "square"
    levels: tuple = (1, 2, 3, 4)
    case: str = "trig"
    solver: str = "auto"
    tol: float = 1e-12
    out_csv: str | None = None
    out_vtk: str | None = None
    mesh_file: str | None = None

    def __post_init__(self):
        if self.family.startswith("file:"):
            path = self.family[len("file:") :]
            self.family = "file"
            if self.mesh_file is None:
                self.mesh_file = path
        self.levels = tuple(int(x) for x in self.levels)

    def validate(self) -> None:
        """Raise ValueError on any inconsistent option."""
        if self.method not in METHOD_TAGS:
            raise ValueError(f"method must be one of {METHOD_TAGS}, got {self.method!r}")
        if self.family not in _FAMILIES:
            raise ValueError(f"family must be one of {_FAMILIES}, got {self.family!r}")
        if not self.levels:
            raise ValueError("levels must be non-empty")
        if any(x < 1 for x in self.levels):
            raise ValueError("levels must be >= 1")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be strictly increasing")
        if self.case not in list_cases():
            raise ValueError(f"unknown case {self.case!r}; known: {list_cases()}")
        if self.solver not in _SOLVER_KINDS:
            raise ValueError(f"solver must be one of {_SOLVER_KINDS}, got {self.solver!r}")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.family == "file":
            if self.mesh_file is None:
                raise ValueError("family 'file' requires --mesh-file")
            with open(self.mesh_file):  # readable check; format errors surface later
                pass


def _level_mesh(config: RunConfig, level: int):
    """Mesh and nominal mesh-size label for one refinement level."""
    if config.family == "square":
        n = 2**level
        return generate_uniform(n), 1.0 / n
    if config.family == "smooth":
        n = 2**level
        return generate_smooth(n), 1.0 / n
    if config.family == "h2par":
        mesh = load_h2par_seed()
        for _ in range(level - 1):
            mesh = refine_uniform(mesh)
        return mesh, 1.0 / (3 * 2 ** (level - 1))
    mesh = read_mesh(config.mesh_file)
    base_h = mesh.h
    for _ in range(level - 1):
        mesh = refine_uniform(mesh)
    return mesh, base_h / 2 ** (level - 1)


def _solve_on_mesh(mesh: QuadMesh, config: RunConfig, case):
    """Assemble, reduce, and solve one level; returns (fields, dofmap)."""
    dofmap = build_dof_map(mesh, config.method)
    system = assemble(
        mesh,
        dofmap,
        case.compliance,
        case.body_force,
        case.displacement,
        method=config.method,
    )
    reduced = eliminate_stress(system, dofmap)
    if config.method == "msmfe1":
        reduced = eliminate_rotation(reduced)
    fields = solve(reduced, SolverConfig(kind=config.solver, tol=config.tol))
    return fields, dofmap


def cmd_converge(config: RunConfig) -> ConvergenceTable:
    """Run the convergence study, print the table, write optional CSV."""
    config.validate()
    case = get_case(config.case)
    reports, labels = [], []
    for level in config.levels:
        mesh, label = _level_mesh(config, level)
        try:
            fields, dofmap = _solve_on_mesh(mesh, config, case)
            report = compute_errors(mesh, fields, case, dofmap=dofmap)
        except Exception as exc:
            raise RuntimeError(f"level {level} (h={label:g}): {exc}") from exc
        logger.info(
            "level %d: h=%g cells=%d dofs=%s stress_err=%.3e",
            level,
            label,
            mesh.n_cells,
            report.dof_counts,
            report.stress_l2,
        )
        reports.append(report)
        labels.append(label)
    table = compute_rates(reports, labels)
    print(table.format())
    if config.out_csv is not None:
        table.write_csv(config.out_csv)
        logger.info("wrote %s", config.out_csv)
    return table


def cmd_run(config: RunConfig):
    """Solve on the first requested level; export VTK when asked."""
    config.validate()
    case = get_case(config.case)
    mesh, label = _level_mesh(config, config.levels[0])
    fields, dofmap = _solve_on_mesh(mesh, config, case)
    logger.info(
        "solved %s on %d cells (h=%g): |u| in [%.6g, %.6g], rotation in [%.6g, %.6g]",
        config.method,
        mesh.n_cells,
        label,
        np.linalg.norm(fields.displacement, axis=1).min(),
        np.linalg.norm(fields.displacement, axis=1).max(),
        fields.rotation.min(),
        fields.rotation.max(),
    )
    if config.out_vtk is not None:
        write_vtk(config.out_vtk, mesh, fields, dofmap)
        logger.info("wrote %s", config.out_vtk)
    return fields


def cmd_mesh_report(config: RunConfig) -> None:
    """Print per-level mesh diagnostics; warn on growing distortion ratio."""
    config.validate()
    previous = None
    for level in config.levels:
        mesh, label = _level_mesh(config, level)
        report = quality_report(mesh)
        print(
            f"level {level}: h={mesh.h:.6g} cells={mesh.n_cells} "
            f"max_defect={report.max_parallelogram_defect:.4e} "
            f"multi_traction_cells={len(report.m1_violations)} "
            f"defect_ratio={report.m2_max_ratio:.6g}"
        )
        if previous is not None and report.m2_max_ratio > 1.1 * previous + 1e-12:
            logger.warning(
                "distortion ratio grew from %.6g to %.6g between levels "
                "(second-order regularity violated)",
                previous,
                report.m2_max_ratio,
            )
        previous = report.m2_max_ratio


def _vertex_stress_samples(mesh: QuadMesh, fields, dofmap) -> np.ndarray:
    """Discrete stress tensor sampled at mesh vertices, (Nv, 2, 2).

    Evaluates the mapped stress at each cell corner and averages the values
    of all cells meeting at a vertex.
    """
    mapped, jac, jac_matrix = _mapped_quadrature(mesh, REF_CORNERS)
    local = _local_stress_coefficients(dofmap, fields.stress_coeffs)
    tau_ref = reference_basis().stress_values(REF_CORNERS)
    sigma = (
        np.einsum("ea,akij,ekmj->ekim", local, tau_ref, jac_matrix)
        / jac[..., None, None]
    )
    samples = np.zeros((mesh.n_vertices, 2, 2))
    counts = np.zeros(mesh.n_vertices)
    np.add.at(samples, mesh.cells.ravel(), sigma.reshape(-1, 2, 2))
    np.add.at(counts, mesh.cells.ravel(), 1.0)
    return samples / counts[:, None, None]


def write_vtk(path, mesh: QuadMesh, fields, dofmap=None) -> None:
    """Write the solution as a legacy-ASCII VTK unstructured grid.

    Displacement is cell data; rotation is cell data (msmfe0) or point data
    (msmfe1); the two stress rows are vertex-averaged point-data vectors.
    """
    if dofmap is None:
        dofmap = build_dof_map(mesh, fields.method_tag)
    stress = _vertex_stress_samples(mesh, fields, dofmap)

    def fmt(x):
        return f"{x:.16g}"

    lines = [
        "# vtk DataFile Version 3.0",
        "msmfe solution",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{fmt(x)} {fmt(y)} 0")
    lines.append(f"CELLS {mesh.n_cells} {5 * mesh.n_cells}")
    for quad in mesh.cells:
        lines.append("4 " + " ".join(str(v) for v in quad))
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines.extend(["9"] * mesh.n_cells)

    lines.append(f"CELL_DATA {mesh.n_cells}")
    lines.append("VECTORS displacement double")
    for ux, uy in fields.displacement:
        lines.append(f"{fmt(ux)} {fmt(uy)} 0")
    if fields.method_tag == "msmfe0":
        lines.append("SCALARS rotation double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(fmt(p) for p in fields.rotation)

    lines.append(f"POINT_DATA {mesh.n_vertices}")
    if fields.method_tag == "msmfe1":
        lines.append("SCALARS rotation double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(fmt(p) for p in fields.rotation)
    for row in (0, 1):
        lines.append(f"VECTORS stress_row_{row + 1} double")
        for s in stress:
            lines.append(f"{fmt(s[row, 0])} {fmt(s[row, 1])} 0")

    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_levels(text: str):
    """Parse "2..6" (inclusive range) or "1,3,5" or "4" into an int tuple."""
    text = text.strip()
    if ".." in text:
        lo, _, hi = text.partition("..")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(part) for part in text.split(","))


def _read_config_file(path) -> dict:
    """Parse a key = value config file; '#' starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file (flags win)")
    parser.add_argument("--method", choices=METHOD_TAGS, help="mixed method variant")
    parser.add_argument("--family", help="mesh family: square | smooth | h2par | file[:<path>]")
    parser.add_argument("--levels", type=_parse_levels, help="refinement levels, e.g. 1..6 or 2,4")
    parser.add_argument("--case", help="manufactured case name")
    parser.add_argument("--solver", choices=_SOLVER_KINDS, help="linear solver kind")
    parser.add_argument("--tol", type=float, help="iterative solver relative tolerance")
    parser.add_argument("--out-csv", help="write the convergence table here")
    parser.add_argument("--out-vtk", help="write the solution fields here")
    parser.add_argument("--mesh-file", help="coarse mesh path for family 'file'")


_CONFIG_PARSERS = {
    "method": str,
    "family": str,
    "levels": _parse_levels,
    "case": str,
    "solver": str,
    "tol": float,
    "out_csv": str,
    "out_vtk": str,
    "mesh_file": str,
}


def _build_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, config-file values, and explicit flags (flags win)."""
    file_values = _read_config_file(args.config) if args.config else {}
    unknown = set(file_values) - set(_CONFIG_PARSERS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for name, parse in _CONFIG_PARSERS.items():
        flag = getattr(args, name)
        if flag is not None:
            kwargs[name] = flag
        elif name in file_values:
            kwargs[name] = parse(file_values[name])
    return RunConfig(**kwargs)


def main(argv=None) -> int:
    """CLI entry point; returns a process exit code."""
    parser = argparse.ArgumentParser(
        prog="msmfe",
        description="Multipoint-stress mixed elasticity on quadrilateral grids.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("converge", "run a convergence study over a mesh family"),
        ("run", "solve once and optionally export VTK"),
        ("mesh-report", "print mesh distortion diagnostics per level"),
    ):
        _add_common_flags(commands.add_parser(name, help=text))
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _build_config(args)
        if args.command == "converge":
            cmd_converge(config)
        elif args.command == "run":
            cmd_run(config)
        else:
            cmd_mesh_report(config)
    except Exception as exc:
        logger.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
