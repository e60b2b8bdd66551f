"""Error norms against manufactured solutions and convergence-rate tables.

All norms are cellwise mapped-Gauss L2 norms (default tensor order 4):

* stress error in the Frobenius norm, with the discrete stress evaluated at
  quadrature points through the contravariant (divergence-preserving) map;
* stress-divergence error, with the discrete divergence pulled back from the
  constant reference divergence (div sigma_h = reference-div / J);
* displacement error against the cellwise-constant discrete field;
* projected displacement error ||Q u - u_h||, where Q is the unweighted
  reference-element mean of the exact displacement — the superconvergent
  cell-centered quantity;
* rotation error between scalar rotation fields (cellwise constant or mapped
  bilinear, by method).

Every reported error is *relative*: divided by the L2 norm of the matching
exact field (stress, divergence of stress = body force, displacement — also
the normalizer for the projected column — and rotation), so columns are
comparable across differently scaled fields.  A zero normalizer (e.g. a
divergence-free case) falls back to the absolute error.  The normalizers are
recorded on the report, so absolute errors are ``error * field_norm``.  The
relative rotation error is identical under the scalar and skew-tensor
conventions, since the factor sqrt(2) cancels.

Rates between consecutive levels use the log ratio of errors over the log
ratio of mesh-size labels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .assembly import DofMap, build_dof_map
from .manufactured import ManufacturedCase
from .mesh import QuadMesh
from .reference import gauss_rule, reference_basis
from .solver import SolutionFields

__all__ = [
    "ErrorReport",
    "TableRow",
    "ConvergenceTable",
    "compute_errors",
    "compute_rates",
]

#: CSV header of a convergence table, in column order.
CSV_COLUMNS = (
    "h",
    "e_sigma",
    "r_sigma",
    "e_divsigma",
    "r_divsigma",
    "e_u",
    "r_u",
    "e_Qu",
    "r_Qu",
    "e_gamma",
    "r_gamma",
)

#: Error-column names in table order, mapped to ErrorReport attributes.
_ERROR_FIELDS = (
    ("e_sigma", "stress_l2"),
    ("e_divsigma", "stress_div"),
    ("e_u", "displacement_l2"),
    ("e_Qu", "displacement_proj"),
    ("e_gamma", "rotation_l2"),
)


@dataclass
class ErrorReport:
    """Relative L2 error norms of one solve against a manufactured solution.

    Attributes
    ----------
    stress_l2, stress_div, displacement_l2, displacement_proj, rotation_l2 : float
        The five table norms (see module docstring), each divided by the
        matching entry of ``field_norms``.
    h : float
        Mesh size (largest vertex-pair distance over cells).
    dof_counts : (int, int, int)
        Stress, displacement, and rotation unknown counts.
    field_norms : (float, float, float, float, float)
        L2 norms of the exact fields used as normalizers, in column order
        (stress, divergence, displacement, displacement again, rotation);
        entries of exactly 1.0 may mean the field was identically zero.
    """

    stress_l2: float
    stress_div: float
    displacement_l2: float
    displacement_proj: float
    rotation_l2: float
    h: float
    dof_counts: tuple
    field_norms: tuple


@dataclass
class TableRow:
    """One convergence-table level: h label, five errors, five rates.

    ``rates`` entries are ``None`` on the first row (undefined).
    """

    h: float
    errors: tuple
    rates: tuple


@dataclass
class ConvergenceTable:
    """Rows of errors and rates over a refinement sequence."""

    rows: list

    def column(self, name: str):
        """Values of one CSV column, e.g. "e_sigma" or "r_gamma"."""
        if name == "h":
            return [row.h for row in self.rows]
        kind, _, key = name.partition("_")
        labels = [label for label, _ in _ERROR_FIELDS]
        try:
            idx = labels.index(f"e_{key}")
        except ValueError:
            raise KeyError(f"unknown table column {name!r}") from None
        if kind == "e":
            return [row.errors[idx] for row in self.rows]
        if kind == "r":
            return [row.rates[idx] for row in self.rows]
        raise KeyError(f"unknown table column {name!r}")

    def format(self) -> str:
        """Render as an aligned markdown table (rates blank on row one)."""
        header = "| " + " | ".join(f"{c:>10}" for c in CSV_COLUMNS) + " |"
        sep = "|" + "|".join("-" * 12 for _ in CSV_COLUMNS) + "|"
        lines = [header, sep]
        for row in self.rows:
            cells = [f"{row.h:>10.6g}"]
            for err, rate in zip(row.errors, row.rates):
                cells.append(f"{err:>10.3e}")
                cells.append(f"{rate:>10.2f}" if rate is not None else " " * 10)
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        """Write the table; floats use shortest round-trip representation."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                cells = [repr(float(row.h))]
                for err, rate in zip(row.errors, row.rates):
                    cells.append(repr(float(err)))
                    cells.append("" if rate is None else repr(float(rate)))
                writer.writerow(cells)

    @classmethod
    def read_csv(cls, path) -> "ConvergenceTable":
        """Parse a table written by :meth:`write_csv` (exact round trip)."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != CSV_COLUMNS:
                raise ValueError(f"unexpected CSV header {header!r}")
            rows = []
            for cells in reader:
                errors = tuple(float(cells[i]) for i in (1, 3, 5, 7, 9))
                rates = tuple(
                    None if cells[i] == "" else float(cells[i])
                    for i in (2, 4, 6, 8, 10)
                )
                rows.append(TableRow(h=float(cells[0]), errors=errors, rates=rates))
        return cls(rows=rows)


def _mapped_quadrature(mesh: QuadMesh, points: np.ndarray):
    """Physical quadrature data for all cells at reference ``points``.

    Returns (X, jac, jac_matrix): mapped points (Ne, nq, 2), Jacobian
    determinants (Ne, nq), and Jacobian matrices (Ne, nq, 2, 2).
    """
    corners = mesh.cell_corners()
    r1 = corners[:, 0]
    r21 = corners[:, 1] - corners[:, 0]
    r41 = corners[:, 3] - corners[:, 0]
    dd = corners[:, 2] - corners[:, 3] - r21
    xh = points[:, 0][None, :, None]
    yh = points[:, 1][None, :, None]
    mapped = (
        r1[:, None, :]
        + xh * r21[:, None, :]
        + yh * r41[:, None, :]
        + xh * yh * dd[:, None, :]
    )
    col1 = r21[:, None, :] + yh * dd[:, None, :]
    col2 = r41[:, None, :] + xh * dd[:, None, :]
    jac = col1[..., 0] * col2[..., 1] - col1[..., 1] * col2[..., 0]
    jac_matrix = np.stack([col1, col2], axis=-1)
    return mapped, jac, jac_matrix


def _local_stress_coefficients(dofmap: DofMap, stress_coeffs: np.ndarray):
    """Per-cell signed stress coefficients, zero at eliminated DOFs; (Ne, 16)."""
    dofs = dofmap.cell_stress_dofs
    vals = stress_coeffs[np.maximum(dofs, 0)]
    return np.where(dofs >= 0, vals, 0.0) * dofmap.cell_stress_signs


def compute_errors(
    mesh: QuadMesh,
    fields: SolutionFields,
    case: ManufacturedCase,
    dofmap: DofMap | None = None,
    order: int = 4,
) -> ErrorReport:
    """L2 error norms of a discrete solution against a manufactured case.

    Parameters
    ----------
    dofmap : DofMap, optional
        Reused if provided, rebuilt from ``fields.method_tag`` otherwise.
    order : int
        Tensor Gauss order per axis (default 4).
    """
    dm = dofmap if dofmap is not None else build_dof_map(mesh, fields.method_tag)
    if fields.displacement.shape != (mesh.n_cells, 2):
        raise ValueError("displacement field does not match the mesh")
    n_rot = mesh.n_cells if fields.method_tag == "msmfe0" else mesh.n_vertices
    if fields.rotation.shape != (n_rot,):
        raise ValueError("rotation field does not match the mesh/method")
    if fields.stress_coeffs.shape != (dm.n_stress,):
        raise ValueError("stress coefficients do not match the DOF map")

    rule = gauss_rule(order)
    points, weights = rule.points, rule.weights
    basis = reference_basis()
    mapped, jac, jac_matrix = _mapped_quadrature(mesh, points)
    flat = mapped.reshape(-1, 2)
    nq = len(weights)

    u_exact = case.displacement(flat).reshape(mesh.n_cells, nq, 2)
    sigma_exact = case.stress(flat).reshape(mesh.n_cells, nq, 2, 2)
    force_exact = case.body_force(flat).reshape(mesh.n_cells, nq, 2)
    rotation_exact = case.rotation(flat).reshape(mesh.n_cells, nq)

    def norm_of(squared):
        return float(np.sqrt(np.einsum("q,eq->", weights, jac * squared)))

    local = _local_stress_coefficients(dm, fields.stress_coeffs)
    tau_ref = basis.stress_values(points)  # (16, nq, 2, 2)
    tau_hat = np.einsum("ea,aqij->eqij", local, tau_ref)
    sigma_h = (
        np.einsum("eqij,eqkj->eqik", tau_hat, jac_matrix) / jac[..., None, None]
    )
    stress_l2 = norm_of(((sigma_exact - sigma_h) ** 2).sum(axis=(-2, -1)))
    stress_norm = norm_of((sigma_exact**2).sum(axis=(-2, -1)))

    div_ref = local @ basis.stress_div  # (Ne, 2), constant per cell
    div_h = div_ref[:, None, :] / jac[..., None]
    stress_div = norm_of(((force_exact - div_h) ** 2).sum(axis=-1))
    div_norm = norm_of((force_exact**2).sum(axis=-1))

    displacement_l2 = norm_of(
        ((u_exact - fields.displacement[:, None, :]) ** 2).sum(axis=-1)
    )
    displacement_norm = norm_of((u_exact**2).sum(axis=-1))

    u_mean = np.einsum("q,eqi->ei", weights, u_exact)  # reference-mean projection
    areas = np.einsum("q,eq->e", weights, jac)  # exact: jac is bilinear
    diff2 = ((u_mean - fields.displacement) ** 2).sum(axis=-1)
    displacement_proj = float(np.sqrt(areas @ diff2))

    if fields.method_tag == "msmfe0":
        rotation_h = np.broadcast_to(fields.rotation[:, None], rotation_exact.shape)
    else:
        phi = basis.rotation_q1_values(points)  # (4, nq)
        rotation_h = np.einsum("ev,vq->eq", fields.rotation[mesh.cells], phi)
    rotation_l2 = norm_of((rotation_exact - rotation_h) ** 2)
    rotation_norm = norm_of(rotation_exact**2)

    norms = tuple(
        x if x > 0.0 else 1.0
        for x in (stress_norm, div_norm, displacement_norm, displacement_norm, rotation_norm)
    )
    return ErrorReport(
        stress_l2=stress_l2 / norms[0],
        stress_div=stress_div / norms[1],
        displacement_l2=displacement_l2 / norms[2],
        displacement_proj=displacement_proj / norms[3],
        rotation_l2=rotation_l2 / norms[4],
        h=mesh.h,
        dof_counts=(dm.n_stress, dm.n_displacement, dm.n_rotation),
        field_norms=norms,
    )


def compute_rates(reports, labels=None) -> ConvergenceTable:
    """Convergence table from per-level error reports.

    Parameters
    ----------
    reports : sequence of ErrorReport
        Finest level last.
    labels : sequence of float, optional
        Mesh-size labels for the h column and the rate denominators
        (e.g. nominal 1/n values); defaults to each report's measured h.

    Rates are ln(e_prev/e_cur) / ln(h_prev/h_cur), blank on the first row.
    Raises ValueError for nonpositive errors or labels, or non-decreasing h.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one error report")
    if labels is None:
        labels = [report.h for report in reports]
    labels = [float(x) for x in labels]
    if len(labels) != len(reports):
        raise ValueError("labels and reports differ in length")
    if any(x <= 0 for x in labels):
        raise ValueError("mesh-size labels must be positive")
    if any(b >= a for a, b in zip(labels, labels[1:])):
        raise ValueError("mesh sizes must strictly decrease")

    errors = []
    for report in reports:
        values = tuple(getattr(report, attr) for _, attr in _ERROR_FIELDS)
        if any(v <= 0 for v in values):
            raise ValueError("rates undefined for nonpositive error values")
        errors.append(values)

    rows = [TableRow(h=labels[0], errors=errors[0], rates=(None,) * 5)]
    for k in range(1, len(reports)):
        shrink = np.log(labels[k - 1] / labels[k])
        rates = tuple(
            float(np.log(errors[k - 1][i] / errors[k][i]) / shrink)
            for i in range(5)
        )
        rows.append(TableRow(h=labels[k], errors=errors[k], rates=rates))
    return ConvergenceTable(rows=rows)
