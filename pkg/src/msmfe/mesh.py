"""Quadrilateral meshes: representation, generators, refinement, diagnostics.

A mesh is a collection of counterclockwise-oriented quadrilateral cells on
vertices in the plane, together with derived edge/adjacency data and boundary
tags.  Three generators cover the standard convergence-study families:

* ``generate_uniform(n)``   -- n-by-n uniform squares on the unit square,
* ``generate_smooth(n)``    -- the uniform mesh pushed through a smooth map,
* ``refine_uniform(mesh)``  -- midpoint splitting of every cell into four,
  which drives the parallelogram defect of each cell down quadratically.

``quality_report`` computes the distortion diagnostics used to judge whether
a mesh family is suitable for the cell-centered elimination: the maximum
parallelogram defect per cell, cells with more than one traction-free edge,
and the max second-difference ratio across neighboring non-parallelogram
cells.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuadMesh",
    "MeshQualityReport",
    "generate_uniform",
    "generate_smooth",
    "refine_uniform",
    "quality_report",
    "read_mesh",
    "write_mesh",
    "load_h2par_seed",
]

# Boundary tags.
DIRICHLET = "D"
NEUMANN = "N"

# Reference-square corner coordinates, counterclockwise from the origin.
REF_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _edge_normal(tangent: np.ndarray) -> np.ndarray:
    """Unit normal obtained by rotating the unit tangent by -90 degrees."""
    t = tangent / np.linalg.norm(tangent)
    return np.array([t[1], -t[0]])


class QuadMesh:
    """Immutable quadrilateral mesh with derived adjacency and orientation data.

    Attributes
    ----------
    vertices : (Nv, 2) float array
        Vertex coordinates.
    cells : (Ne, 4) int array
        Vertex indices of each cell in counterclockwise order.
    edges : (Ned, 2) int array
        Unique edges as vertex pairs (low index first).  The global edge
        normal is the lower-to-higher tangent rotated by -90 degrees.
    cell_edges : (Ne, 4) int array
        Global edge index of each local cell edge (local edge ``l`` runs from
        corner ``l`` to corner ``(l+1) % 4``).
    cell_edge_signs : (Ne, 4) float array
        +1 where the local outward normal equals the global edge normal,
        -1 where it is opposite.
    vertex_cells : list of lists
        Incident cells of every vertex.
    edge_cells : (Ned, 2, 2) int array
        Owning (cell, local edge) pairs per edge, -1 padded for boundaries.
    boundary_edge_tags : dict
        Maps boundary edge index to "D" (displacement data) or "N"
        (zero normal stress).
    h : float
        Maximum cell diameter (max vertex-pair distance over cells).
    """

    def __init__(self, vertices, cells, boundary_tags=None):
        """Build the mesh and all derived data.

        Parameters
        ----------
        vertices : (Nv, 2) array_like
        cells : (Ne, 4) array_like
            Counterclockwise vertex indices per cell.
        boundary_tags : dict, optional
            Maps a boundary edge, given as a frozenset/tuple of its two
            vertex indices, to "D" or "N".  Untagged boundary edges default
            to "D".
        """
        self.vertices = np.asarray(vertices, dtype=float)
        self.cells = np.asarray(cells, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must be an (Nv, 2) array")
        if self.cells.ndim != 2 or self.cells.shape[1] != 4:
            raise ValueError("cells must be an (Ne, 4) array")
        self._validate_orientation()
        self._build_edges()
        self._tag_boundary(boundary_tags or {})
        self._build_vertex_cells()
        corners = self.vertices[self.cells]  # (Ne, 4, 2)
        diffs = corners[:, :, None, :] - corners[:, None, :, :]
        self.h = float(np.sqrt((diffs**2).sum(-1).max())) if len(self.cells) else 0.0

    # -- construction helpers -------------------------------------------------

    def _validate_orientation(self):
        x = self.vertices[self.cells]  # (Ne, 4, 2)
        nxt = np.roll(x, -1, axis=1)
        signed_area = 0.5 * (x[:, :, 0] * nxt[:, :, 1] - nxt[:, :, 0] * x[:, :, 1]).sum(axis=1)
        if np.any(signed_area <= 0):
            bad = np.where(signed_area <= 0)[0]
            raise ValueError(f"cells {bad.tolist()} are not counterclockwise")
        # Positive corner Jacobians <=> every corner makes a left turn.
        jac = self._corner_jacobians()
        if np.any(jac <= 0):
            bad = sorted(set(np.where(jac <= 0)[0].tolist()))
            raise ValueError(f"cells {bad} have a non-positive corner Jacobian")

    def _corner_jacobians(self) -> np.ndarray:
        """Bilinear-map Jacobian determinant at the four corners, (Ne, 4)."""
        x = self.vertices[self.cells]
        r21 = x[:, 1] - x[:, 0]
        r41 = x[:, 3] - x[:, 0]
        d = (x[:, 2] - x[:, 3]) - r21  # r34 - r21
        ref = REF_CORNERS
        jac = np.empty((len(self.cells), 4))
        for k in range(4):
            c1 = r21 + d * ref[k, 1]
            c2 = r41 + d * ref[k, 0]
            jac[:, k] = c1[:, 0] * c2[:, 1] - c1[:, 1] * c2[:, 0]
        return jac

    def _build_edges(self):
        edge_index: dict = {}
        edges = []
        ne = len(self.cells)
        self.cell_edges = np.empty((ne, 4), dtype=np.int64)
        self.cell_edge_signs = np.empty((ne, 4))
        edge_count = np.zeros(0, dtype=np.int64)
        counts = []
        owners = []
        for c in range(ne):
            quad = self.cells[c]
            for l in range(4):
                a, b = int(quad[l]), int(quad[(l + 1) % 4])
                key = (a, b) if a < b else (b, a)
                e = edge_index.get(key)
                if e is None:
                    e = len(edges)
                    edge_index[key] = e
                    edges.append(key)
                    counts.append(0)
                    owners.append([])
                self.cell_edges[c, l] = e
                # Global normal follows the stored (low, high) tangent; the
                # local outward normal follows the local traversal direction.
                self.cell_edge_signs[c, l] = 1.0 if (a, b) == edges[e] else -1.0
                counts[e] += 1
                owners[e].append((c, l))
        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        counts = np.array(counts)
        if np.any(counts > 2):
            raise ValueError("an edge is shared by more than two cells")
        self._edge_n_cells = counts
        # (Ned, 2, 2): owning (cell, local edge) pairs, -1 padded.
        self.edge_cells = -np.ones((len(self.edges), 2, 2), dtype=np.int64)
        for e, own in enumerate(owners):
            for slot, (c, l) in enumerate(own):
                self.edge_cells[e, slot] = (c, l)
        interior = counts == 2
        if len(self.edges):
            sgn = np.zeros(len(self.edges))
            for e, own in enumerate(owners):
                if counts[e] == 2:
                    s = [self.cell_edge_signs[c, l] for c, l in own]
                    sgn[e] = s[0] * s[1]
            if np.any(sgn[interior] >= 0):
                raise AssertionError("interior edge signs are not opposite")

    def _tag_boundary(self, tags):
        norm_tags = {}
        for key, tag in tags.items():
            a, b = sorted(int(v) for v in key)
            if tag not in (DIRICHLET, NEUMANN):
                raise ValueError(f"unknown boundary tag {tag!r}")
            norm_tags[(a, b)] = tag
        self.boundary_edge_tags = {}
        for e in range(len(self.edges)):
            if self._edge_n_cells[e] == 1:
                key = tuple(self.edges[e].tolist())
                self.boundary_edge_tags[e] = norm_tags.pop(key, DIRICHLET)
        if norm_tags:
            missing = sorted(norm_tags)
            raise ValueError(f"tags given for non-boundary edges: {missing}")

    def _build_vertex_cells(self):
        self.vertex_cells = [[] for _ in range(len(self.vertices))]
        for c, quad in enumerate(self.cells):
            for v in quad:
                self.vertex_cells[int(v)].append(c)

    # -- queries ---------------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def boundary_edges(self) -> np.ndarray:
        """Indices of edges with exactly one incident cell."""
        return np.where(self._edge_n_cells == 1)[0]

    def edge_normals(self) -> np.ndarray:
        """Global unit normal per edge (lower-to-higher tangent rotated -90)."""
        t = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        t = t / np.linalg.norm(t, axis=1, keepdims=True)
        return np.stack([t[:, 1], -t[:, 0]], axis=1)

    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.linalg.norm(d, axis=1)

    def cell_corners(self) -> np.ndarray:
        """Physical corner coordinates per cell, shape (Ne, 4, 2)."""
        return self.vertices[self.cells]

    def parallelogram_defects(self) -> np.ndarray:
        """Per-cell opposite-edge mismatch norm (zero for parallelograms)."""
        x = self.vertices[self.cells]
        d = (x[:, 2] - x[:, 3]) - (x[:, 1] - x[:, 0])
        return np.linalg.norm(d, axis=1)

    def cell_areas(self) -> np.ndarray:
        """Exact area of each cell's vertex quadrilateral."""
        x = self.vertices[self.cells]
        nxt = np.roll(x, -1, axis=1)
        return 0.5 * (x[:, :, 0] * nxt[:, :, 1] - nxt[:, :, 0] * x[:, :, 1]).sum(axis=1)


@dataclass
class MeshQualityReport:
    """Distortion diagnostics of a quadrilateral mesh.

    Attributes
    ----------
    max_parallelogram_defect : float
        Max over cells of the opposite-edge mismatch norm.
    m1_violations : list of int
        Cells with more than one zero-traction ("N") boundary edge.
    m2_max_ratio : float
        Max over qualifying neighbor edge pairs of the second difference
        through the shared vertex divided by h^2.  Pairs qualify when at
        least one of the two cells is a non-parallelogram (defect above a
        tolerance).
    """

    max_parallelogram_defect: float
    m1_violations: list
    m2_max_ratio: float


def generate_uniform(n: int) -> QuadMesh:
    """n-by-n uniform square mesh of the unit square, all boundaries tagged D."""
    if n < 1:
        raise ValueError("n must be >= 1")
    side = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(side, side, indexing="xy")
    vertices = np.stack([xx.ravel(), yy.ravel()], axis=1)
    idx = np.arange((n + 1) * (n + 1)).reshape(n + 1, n + 1)
    v0 = idx[:-1, :-1].ravel()
    v1 = idx[:-1, 1:].ravel()
    v2 = idx[1:, 1:].ravel()
    v3 = idx[1:, :-1].ravel()
    cells = np.stack([v0, v1, v2, v3], axis=1)
    return QuadMesh(vertices, cells)


def generate_smooth(n: int) -> QuadMesh:
    """Uniform n-by-n mesh pushed through a fixed smooth interior map.

    Every vertex moves by ``0.1*sin(2*pi*x)*sin(2*pi*y)`` in both
    coordinates; boundary vertices are fixed points, so the domain stays the
    unit square.  Raises if the map folds a cell (negative corner Jacobian).
    """
    base = generate_uniform(n)
    v = base.vertices
    bump = 0.1 * np.sin(2 * np.pi * v[:, 0]) * np.sin(2 * np.pi * v[:, 1])
    moved = v + bump[:, None]
    return QuadMesh(moved, base.cells)


def refine_uniform(mesh: QuadMesh) -> QuadMesh:
    """Split every cell into four via edge midpoints and the cell center.

    Children of a cell with opposite-edge mismatch ``d`` have mismatch
    ``d/4``, so repeated refinement produces a family whose cells are
    quadratically close to parallelograms.  Boundary children inherit the
    parent edge's tag.
    """
    nv = mesh.n_vertices
    mid_of_edge = nv + np.arange(mesh.n_edges)
    center_of_cell = nv + mesh.n_edges + np.arange(mesh.n_cells)
    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    centers = mesh.cell_corners().mean(axis=1)
    vertices = np.vstack([mesh.vertices, midpoints, centers])

    cells = []
    for c in range(mesh.n_cells):
        quad = mesh.cells[c]
        m = [mid_of_edge[mesh.cell_edges[c, l]] for l in range(4)]
        cc = center_of_cell[c]
        cells.append([quad[0], m[0], cc, m[3]])
        cells.append([m[0], quad[1], m[1], cc])
        cells.append([cc, m[1], quad[2], m[2]])
        cells.append([m[3], cc, m[2], quad[3]])
    cells = np.array(cells, dtype=np.int64)

    tags = {}
    for e, tag in mesh.boundary_edge_tags.items():
        a, b = mesh.edges[e]
        m = mid_of_edge[e]
        tags[(int(a), int(m))] = tag
        tags[(int(m), int(b))] = tag
    return QuadMesh(vertices, cells, tags)


def quality_report(mesh: QuadMesh, defect_tol: float | None = None) -> MeshQualityReport:
    """Compute distortion diagnostics for a mesh.

    Parameters
    ----------
    defect_tol : float, optional
        Cells with parallelogram defect above this count as
        non-parallelograms for the second-difference ratio; defaults to
        ``1e-12 * mesh.h``.
    """
    if defect_tol is None:
        defect_tol = 1e-12 * mesh.h
    defects = mesh.parallelogram_defects()
    max_defect = float(defects.max()) if len(defects) else 0.0

    neumann_count = np.zeros(mesh.n_cells, dtype=int)
    for e, tag in mesh.boundary_edge_tags.items():
        if tag == NEUMANN:
            c = int(mesh.edge_cells[e, 0, 0])
            neumann_count[c] += 1
    m1 = np.where(neumann_count > 1)[0].tolist()

    # Second-difference ratio across each interior edge: at each endpoint p
    # of the shared edge, take the other edge of each neighbor cell at p and
    # measure how far the three consecutive points q -> p -> q~ deviate from
    # a straight, evenly spaced line.
    m2 = 0.0
    h2 = mesh.h**2
    for e in range(mesh.n_edges):
        if mesh._edge_n_cells[e] != 2:
            continue
        (c0, l0), (c1, l1) = mesh.edge_cells[e]
        if defects[c0] <= defect_tol and defects[c1] <= defect_tol:
            continue
        for p in mesh.edges[e]:
            q = _other_edge_endpoint(mesh, int(c0), e, int(p))
            qt = _other_edge_endpoint(mesh, int(c1), e, int(p))
            if q is None or qt is None:
                continue
            sd = 2.0 * mesh.vertices[int(p)] - mesh.vertices[q] - mesh.vertices[qt]
            m2 = max(m2, float(np.linalg.norm(sd)) / h2)
    return MeshQualityReport(max_defect, m1, m2)


def _other_edge_endpoint(mesh: QuadMesh, cell: int, edge: int, p: int):
    """Far endpoint of the cell's other edge at vertex p (not edge ``edge``)."""
    for l in range(4):
        e = mesh.cell_edges[cell, l]
        if e == edge:
            continue
        a, b = mesh.edges[e]
        if a == p:
            return int(b)
        if b == p:
            return int(a)
    return None


# -- plain-text mesh files ------------------------------------------------------


def read_mesh(path_or_file) -> QuadMesh:
    """Read a mesh from the plain-text format.

    Format: one line ``NV NE NB``; NV lines ``x y``; NE lines
    ``v0 v1 v2 v3`` (counterclockwise); NB lines ``v0 v1 tag`` with tag D or
    N.  Indices are 0-based.
    """
    if hasattr(path_or_file, "read"):
        text = path_or_file.read()
    else:
        with open(path_or_file, "r", encoding="utf-8") as fh:
            text = fh.read()
    tokens = text.split()
    pos = 0

    def take(k):
        nonlocal pos
        out = tokens[pos : pos + k]
        if len(out) != k:
            raise ValueError("truncated mesh file")
        pos += k
        return out

    nv, ne, nb = (int(t) for t in take(3))
    vertices = np.array([[float(t) for t in take(2)] for _ in range(nv)])
    cells = np.array([[int(t) for t in take(4)] for _ in range(ne)], dtype=np.int64)
    tags = {}
    for _ in range(nb):
        a, b, tag = take(3)
        tags[(int(a), int(b))] = tag
    return QuadMesh(vertices, cells, tags)


def write_mesh(mesh: QuadMesh, path_or_file) -> None:
    """Write a mesh in the plain-text format accepted by :func:`read_mesh`."""
    buf = io.StringIO()
    boundary = sorted(mesh.boundary_edge_tags)
    buf.write(f"{mesh.n_vertices} {mesh.n_cells} {len(boundary)}\n")
    for x, y in mesh.vertices:
        buf.write(f"{float(x)!r} {float(y)!r}\n")
    for quad in mesh.cells:
        buf.write(" ".join(str(int(v)) for v in quad) + "\n")
    for e in boundary:
        a, b = mesh.edges[e]
        buf.write(f"{int(a)} {int(b)} {mesh.boundary_edge_tags[e]}\n")
    text = buf.getvalue()
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", encoding="utf-8") as fh:
            fh.write(text)


def load_h2par_seed() -> QuadMesh:
    """Bundled 3x3-cell coarse mesh with perturbed interior vertices.

    Refining it with :func:`refine_uniform` yields a family of general
    (non-parallelogram) quadrilaterals whose distortion decays quadratically.
    """
    from importlib import resources

    ref = resources.files("msmfe.data").joinpath("h2par_seed.txt")
    with ref.open("r") as fh:
        return read_mesh(fh)
