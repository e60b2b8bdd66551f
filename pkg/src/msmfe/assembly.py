"""Degree-of-freedom numbering and assembly of the saddle-point blocks.

Two method variants share the machinery:

* ``msmfe0`` -- piecewise-constant rotations, one per cell, paired with the
  stress by exact Gauss integration;
* ``msmfe1`` -- continuous bilinear rotations, one per vertex, paired with
  the stress by the same vertex quadrature as the stress energy, which keeps
  every rotation row inside one vertex block.

Stress degrees of freedom sit at (edge, edge endpoint, tensor row) triples
and are numbered grouped by vertex: all DOFs whose endpoint is vertex v are
contiguous (incident edges in ascending order, rows innermost).  With the
vertex quadrature rule the stress energy matrix then consists of independent
dense blocks, one per vertex, stored packed (row-major per block).

Deterministic assembly order: contributions accumulate cell by cell in index
order, corners and local DOFs in reference order, so repeated runs are
bit-identical per backend.

Zero-normal-stress boundary edges are enforced by eliminating their stress
DOFs from the numbering; displacement boundary data enters the stress-row
load through its edgewise constant projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._kernels import get_kernels
from .manufactured import IsotropicCompliance
from .mesh import NEUMANN, QuadMesh
from .reference import gauss_rule, reference_basis

__all__ = [
    "METHOD_TAGS",
    "DofMap",
    "AssembledSystem",
    "build_dof_map",
    "assemble",
    "project_p0_boundary",
]

METHOD_TAGS = ("msmfe0", "msmfe1")

#: Local stress DOF metadata, index a = 4*edge + 2*endpoint + row.
_DOF_EDGE = np.repeat(np.arange(4), 4)
_DOF_END = np.tile(np.repeat(np.arange(2), 2), 4)
_DOF_ROW = np.tile(np.arange(2), 8)
#: Local corner -> its four local stress DOFs (own edge rows, previous edge
#: rows), matching the kernel's (own, own, prev, prev) convention.
_CORNER_LOCALS = np.array(
    [[4 * k, 4 * k + 1, 4 * ((k + 3) % 4) + 2, 4 * ((k + 3) % 4) + 3] for k in range(4)]
)


class DofMap:
    """Global numbering of stress, displacement, and rotation unknowns.

    Attributes
    ----------
    method : str
        "msmfe0" or "msmfe1".
    n_stress, n_displacement, n_rotation : int
        Unknown counts.  Stress DOFs on zero-traction boundary edges are
        eliminated and do not appear.
    block_ptr : (Nv + 1,) int array
        Stress DOF range of each vertex block (2 x #active incident edges).
    block_offsets, block_sizes : (Nv,) int arrays
        Packed-storage offset and size of each vertex block.
    edge_dof : (Ned, 2, 2) int array
        Global stress DOF of (edge, stored endpoint, tensor row); -1 where
        constrained away.
    cell_stress_dofs, cell_stress_signs : (Ne, 16) arrays
        Global DOF and orientation sign of each local cell stress DOF
        (local index 4*edge + 2*endpoint + row).
    """

    def __init__(self, mesh: QuadMesh, method: str):
        if method not in METHOD_TAGS:
            raise ValueError(f"method must be one of {METHOD_TAGS}, got {method!r}")
        self.mesh = mesh
        self.method = method

        active = np.ones(mesh.n_edges, dtype=bool)
        for e, tag in mesh.boundary_edge_tags.items():
            if tag == NEUMANN:
                active[e] = False
        self._active_edges = active

        act_ids = np.where(active)[0]
        v_arr = np.concatenate([mesh.edges[act_ids, 0], mesh.edges[act_ids, 1]])
        e_arr = np.concatenate([act_ids, act_ids])
        order = np.lexsort((e_arr, v_arr))
        v_sorted, e_sorted = v_arr[order], e_arr[order]

        degree = np.bincount(v_arr, minlength=mesh.n_vertices)
        self.block_ptr = np.zeros(mesh.n_vertices + 1, dtype=np.int64)
        np.cumsum(2 * degree, out=self.block_ptr[1:])
        self.block_sizes = 2 * degree.astype(np.int64)
        self.block_offsets = np.zeros(mesh.n_vertices, dtype=np.int64)
        np.cumsum(self.block_sizes[:-1] ** 2, out=self.block_offsets[1:])
        self.n_block_values = int(np.sum(self.block_sizes**2))

        starts = np.zeros(mesh.n_vertices, dtype=np.int64)
        np.cumsum(degree[:-1], out=starts[1:])
        rank = np.arange(len(v_sorted)) - starts[v_sorted]
        first_dof = self.block_ptr[v_sorted] + 2 * rank

        self.edge_dof = -np.ones((mesh.n_edges, 2, 2), dtype=np.int64)
        endpoint = (mesh.edges[e_sorted, 1] == v_sorted).astype(np.int64)
        self.edge_dof[e_sorted, endpoint, 0] = first_dof
        self.edge_dof[e_sorted, endpoint, 1] = first_dof + 1

        self.n_stress = int(self.block_ptr[-1])
        self.n_displacement = 2 * mesh.n_cells
        self.n_rotation = mesh.n_cells if method == "msmfe0" else mesh.n_vertices

        # Per-cell tables: local DOF a = 4*edge + 2*endpoint + row.
        cell_edges_local = mesh.cell_edges[:, _DOF_EDGE]  # (Ne, 16)
        corner_vertex = mesh.cells[:, (_DOF_EDGE + _DOF_END) % 4]  # (Ne, 16)
        endpoint_idx = (mesh.edges[cell_edges_local, 1] == corner_vertex).astype(int)
        self.cell_stress_dofs = self.edge_dof[
            cell_edges_local, endpoint_idx, np.broadcast_to(_DOF_ROW, endpoint_idx.shape)
        ]
        self.cell_stress_signs = mesh.cell_edge_signs[:, _DOF_EDGE]

        # Corner-grouped views for the block assembly kernel.
        ids = self.cell_stress_dofs[:, _CORNER_LOCALS]  # (Ne, 4, 4)
        self.corner_dof_offsets = np.where(
            ids >= 0, ids - self.block_ptr[mesh.cells][:, :, None], -1
        )
        self.corner_signs = self.cell_stress_signs[:, _CORNER_LOCALS]

    # -- lookups ---------------------------------------------------------------

    def stress_dof(self, edge: int, vertex: int, row: int) -> int:
        """Global stress DOF at (edge, endpoint vertex, tensor row); -1 if constrained."""
        a, b = self.mesh.edges[edge]
        if vertex == a:
            end = 0
        elif vertex == b:
            end = 1
        else:
            raise ValueError(f"vertex {vertex} is not an endpoint of edge {edge}")
        return int(self.edge_dof[edge, end, row])

    def displacement_dof(self, cell: int, component: int) -> int:
        return 2 * cell + component

    def rotation_dof(self, index: int) -> int:
        """Rotation DOF of a cell (msmfe0) or vertex (msmfe1)."""
        return index

    def vertex_block_index(self, vertex: int) -> np.ndarray:
        """The stress DOFs supported at a vertex (a contiguous range)."""
        return np.arange(self.block_ptr[vertex], self.block_ptr[vertex + 1])


def build_dof_map(mesh: QuadMesh, method: str) -> DofMap:
    """Number all unknowns of the chosen method on a mesh."""
    return DofMap(mesh, method)


@dataclass
class AssembledSystem:
    """The assembled saddle-point blocks and loads of one discrete problem.

    Attributes
    ----------
    stress_blocks : flat float array
        Packed vertex-block values of the stress energy matrix (SPD).
    div_pairing : csr_matrix, (n_displacement, n_stress)
        Entry (i, j) is the divergence of stress basis j paired with
        displacement basis i (values 0 or +-1/2; geometry independent).
    rotation_pairing : csr_matrix, (n_rotation, n_stress)
        Stress/rotation pairing: exact Gauss for msmfe0, vertex quadrature
        for msmfe1.
    rhs_boundary : (n_stress,) float array
        Displacement-data load on the stress equation.
    rhs_body : (n_displacement,) float array
        Body-force load on the displacement equation.
    method_tag : str
    dofmap : DofMap
    """

    stress_blocks: np.ndarray
    div_pairing: sp.csr_matrix
    rotation_pairing: sp.csr_matrix
    rhs_boundary: np.ndarray
    rhs_body: np.ndarray
    method_tag: str
    dofmap: DofMap = field(repr=False)

    def stress_matrix(self) -> sp.csr_matrix:
        """The vertex-block stress energy matrix as a sparse matrix."""
        dm = self.dofmap
        rows, cols = [], []
        for v in range(dm.mesh.n_vertices):
            lo, hi = dm.block_ptr[v], dm.block_ptr[v + 1]
            idx = np.arange(lo, hi)
            rows.append(np.repeat(idx, hi - lo))
            cols.append(np.tile(idx, hi - lo))
        mat = sp.coo_matrix(
            (self.stress_blocks, (np.concatenate(rows), np.concatenate(cols))),
            shape=(dm.n_stress, dm.n_stress),
        )
        return mat.tocsr()

    def constraint_matrix(self) -> sp.csc_matrix:
        """Divergence and rotation pairings stacked (rotation rows last)."""
        return sp.vstack([self.div_pairing, self.rotation_pairing]).tocsc()


def project_p0_boundary(dirichlet_fn, edge) -> np.ndarray:
    """Average of a boundary displacement over one edge (3-point Gauss).

    Parameters
    ----------
    dirichlet_fn : callable
        (n, 2) points -> (n, 2) displacement values.
    edge : (2, 2) array_like
        Physical endpoints of the edge segment.

    Returns
    -------
    (2,) constant vector: the L2 projection of the data onto edgewise
    constants (the edge parametrization is affine, so the arc-length average
    equals the parameter average).
    """
    p0, p1 = np.asarray(edge, dtype=float)
    t, w = np.polynomial.legendre.leggauss(3)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    pts = p0[None, :] + t[:, None] * (p1 - p0)[None, :]
    return w @ np.asarray(dirichlet_fn(pts), dtype=float)


def _corner_geometry(mesh: QuadMesh):
    """Corner Jacobian matrices, determinants, and mapped edge normals.

    Returns
    -------
    det : (Ne, 4) corner Jacobian determinants
    gvec : (Ne, 4, 2, 2) mapped reference edge normals per corner,
        [corner, {own edge, previous edge}, component].
    """
    x = mesh.cell_corners()
    r21 = x[:, 1] - x[:, 0]
    r41 = x[:, 3] - x[:, 0]
    d = (x[:, 2] - x[:, 3]) - r21
    ref_xy = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    c1 = r21[:, None, :] + d[:, None, :] * ref_xy[None, :, 1, None]  # (Ne,4,2)
    c2 = r41[:, None, :] + d[:, None, :] * ref_xy[None, :, 0, None]
    det = c1[..., 0] * c2[..., 1] - c1[..., 1] * c2[..., 0]
    if np.any(det <= 0):
        bad = sorted(set(np.where(det <= 0)[0].tolist()))
        raise ValueError(f"degenerate cells (non-positive corner Jacobian): {bad}")
    # Outward reference normals: edge 0 -> -e2, 1 -> +e1, 2 -> +e2, 3 -> -e1;
    # the previous edge at corner k is edge (k + 3) % 4.
    gvec = np.empty((mesh.n_cells, 4, 2, 2))
    gvec[:, 0, 0] = -c2[:, 0]
    gvec[:, 1, 0] = c1[:, 1]
    gvec[:, 2, 0] = c2[:, 2]
    gvec[:, 3, 0] = -c1[:, 3]
    gvec[:, 0, 1] = -c1[:, 0]
    gvec[:, 1, 1] = -c2[:, 1]
    gvec[:, 2, 1] = c1[:, 2]
    gvec[:, 3, 1] = c2[:, 3]
    return det, gvec


def _sample_compliance(compliance, mesh: QuadMesh) -> np.ndarray:
    """Compliance 4x4 matrices at every physical cell corner, (Ne, 4, 4, 4)."""
    corners = mesh.cell_corners()
    if isinstance(compliance, IsotropicCompliance):
        amat = np.broadcast_to(
            compliance.as_matrix(), (mesh.n_cells, 4, 4, 4)
        ).copy()
    else:
        amat = np.asarray(
            compliance(corners.reshape(-1, 2)), dtype=float
        ).reshape(mesh.n_cells, 4, 4, 4)
    sym_gap = np.abs(amat - amat.transpose(0, 1, 3, 2)).max()
    if sym_gap > 1e-12:
        raise ValueError(f"compliance sample not symmetric (gap {sym_gap:.2e})")
    try:
        np.linalg.cholesky(amat.reshape(-1, 4, 4))
    except np.linalg.LinAlgError as exc:
        raise ValueError("compliance sample not positive definite") from exc
    return amat


def _map_points(mesh: QuadMesh, ref_points: np.ndarray):
    """Physical images and Jacobian determinants of reference points, all cells.

    Returns X (Ne, nq, 2) and J (Ne, nq).
    """
    x = mesh.cell_corners()
    r1 = x[:, 0]
    r21 = x[:, 1] - x[:, 0]
    r41 = x[:, 3] - x[:, 0]
    d = (x[:, 2] - x[:, 3]) - r21
    xs, ys = ref_points[:, 0], ref_points[:, 1]
    pts = (
        r1[:, None, :]
        + xs[None, :, None] * r21[:, None, :]
        + ys[None, :, None] * r41[:, None, :]
        + (xs * ys)[None, :, None] * d[:, None, :]
    )
    c1 = r21[:, None, :] + ys[None, :, None] * d[:, None, :]
    c2 = r41[:, None, :] + xs[None, :, None] * d[:, None, :]
    jac = c1[..., 0] * c2[..., 1] - c1[..., 1] * c2[..., 0]
    return pts, jac


def _assemble_rotation_pairing(mesh, dofmap, det, gvec) -> sp.csr_matrix:
    """Stress/rotation coupling rows for either method."""
    valid = dofmap.cell_stress_dofs >= 0
    if dofmap.method == "msmfe1":
        # Vertex rule: at corner k only the four corner DOFs contribute, each
        # through the skew contraction of (unit row) x (mapped normal).
        ids = dofmap.cell_stress_dofs[:, _CORNER_LOCALS]  # (Ne,4,4)
        vals = np.empty_like(dofmap.corner_signs)  # (Ne,4,4)
        vals[:, :, 0] = gvec[:, :, 0, 1]
        vals[:, :, 1] = -gvec[:, :, 0, 0]
        vals[:, :, 2] = gvec[:, :, 1, 1]
        vals[:, :, 3] = -gvec[:, :, 1, 0]
        vals = 0.25 * vals * dofmap.corner_signs
        rows = np.broadcast_to(mesh.cells[:, :, None], ids.shape)
        mask = ids >= 0
    else:
        # Exact integration against the constant skew mode: the integrand is
        # cubic per variable, integrated exactly by the 2x2 Gauss rule.
        rule = gauss_rule(2)
        basis_vals = reference_basis().stress_values(rule.points)  # (16,4,2,2)
        x = mesh.cell_corners()
        r21 = x[:, 1] - x[:, 0]
        r41 = x[:, 3] - x[:, 0]
        d = (x[:, 2] - x[:, 3]) - r21
        xs, ys = rule.points[:, 0], rule.points[:, 1]
        c1 = r21[:, None, :] + ys[None, :, None] * d[:, None, :]  # (Ne,4,2)
        c2 = r41[:, None, :] + xs[None, :, None] * d[:, None, :]
        df = np.stack([c1, c2], axis=-1)  # (Ne, q, 2, 2): columns c1, c2
        skew = np.einsum("aqj,eqj->ea", basis_vals[:, :, 0, :], df[:, :, 1, :])
        skew -= np.einsum("aqj,eqj->ea", basis_vals[:, :, 1, :], df[:, :, 0, :])
        vals = 0.25 * skew * dofmap.cell_stress_signs  # (Ne, 16)
        ids = dofmap.cell_stress_dofs
        rows = np.broadcast_to(np.arange(mesh.n_cells)[:, None], ids.shape)
        mask = valid
    mat = sp.coo_matrix(
        (vals[mask], (rows[mask], ids[mask])),
        shape=(dofmap.n_rotation, dofmap.n_stress),
    )
    return mat.tocsr()


def assemble(
    mesh: QuadMesh,
    dofmap: DofMap,
    compliance,
    body_force,
    dirichlet_data,
    method: str | None = None,
) -> AssembledSystem:
    """Assemble all blocks and loads of the discrete problem.

    Parameters
    ----------
    mesh : QuadMesh
    dofmap : DofMap
        Numbering built by :func:`build_dof_map` (determines the method).
    compliance : IsotropicCompliance or callable
        Material law; a callable receives (n, 2) physical points and returns
        (n, 4, 4) matrices acting on row-major 2x2 tensors.  Sampled at the
        physical cell corners (the vertex quadrature evaluates there).
    body_force : callable
        (n, 2) points -> (n, 2) force densities.
    dirichlet_data : callable
        (n, 2) boundary points -> (n, 2) displacement data.
    method : str, optional
        Must match ``dofmap.method`` when given.
    """
    if method is not None and method != dofmap.method:
        raise ValueError(f"method {method!r} does not match dofmap ({dofmap.method!r})")
    det, gvec = _corner_geometry(mesh)
    amat = _sample_compliance(compliance, mesh)

    kernels = get_kernels()
    stress_blocks = np.zeros(dofmap.n_block_values)
    kernels.assemble_stress_blocks(
        gvec,
        det,
        amat,
        dofmap.corner_dof_offsets,
        dofmap.corner_signs,
        mesh.cells,
        dofmap.block_offsets,
        dofmap.block_sizes,
        stress_blocks,
    )

    # Divergence pairing: geometry independent, value (+-)1/2 per local DOF.
    ids = dofmap.cell_stress_dofs
    rows = 2 * np.arange(mesh.n_cells)[:, None] + _DOF_ROW[None, :]
    vals = 0.5 * dofmap.cell_stress_signs
    mask = ids >= 0
    div_pairing = sp.coo_matrix(
        (vals[mask], (np.broadcast_to(rows, ids.shape)[mask], ids[mask])),
        shape=(dofmap.n_displacement, dofmap.n_stress),
    ).tocsr()

    rotation_pairing = _assemble_rotation_pairing(mesh, dofmap, det, gvec)

    # Boundary-data load on the stress rows: edge average of the data times
    # the (constant 1/2) integral of each endpoint's linear trace function.
    rhs_boundary = np.zeros(dofmap.n_stress)
    for e, tag in mesh.boundary_edge_tags.items():
        if tag == NEUMANN:
            continue
        gbar = project_p0_boundary(dirichlet_data, mesh.vertices[mesh.edges[e]])
        cell, local = mesh.edge_cells[e, 0]
        sign = mesh.cell_edge_signs[cell, local]
        for end in range(2):
            for row in range(2):
                rhs_boundary[dofmap.edge_dof[e, end, row]] += 0.5 * sign * gbar[row]

    # Body-force load on the displacement rows, mapped Gauss of order 4.
    rule = gauss_rule(4)
    pts, jac = _map_points(mesh, rule.points)
    fvals = np.asarray(body_force(pts.reshape(-1, 2)), dtype=float).reshape(
        mesh.n_cells, -1, 2
    )
    rhs_body = np.einsum("q,eq,eqi->ei", rule.weights, jac, fvals).ravel()

    return AssembledSystem(
        stress_blocks=stress_blocks,
        div_pairing=div_pairing,
        rotation_pairing=rotation_pairing,
        rhs_boundary=rhs_boundary,
        rhs_body=rhs_body,
        method_tag=dofmap.method,
        dofmap=dofmap,
    )
