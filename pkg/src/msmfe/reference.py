"""Reference-element machinery for the stress/displacement/rotation spaces.

Everything is built on the unit reference square with corners
(0,0), (1,0), (1,1), (0,1) counterclockwise:

* ``ElementGeometry`` evaluates the bilinear map of a physical cell, its
  Jacobian matrix, and its determinant at reference points.
* ``ReferenceBasis`` holds the 16 tensor-valued nodal stress basis functions
  (two normal components per edge, fixed at the edge endpoints, times two
  tensor rows), the constant displacement basis, and the constant/bilinear
  skew rotation bases.
* ``piola_stress`` maps reference tensors to physical ones row by row,
  preserving edge normal fluxes and the divergence pairing.
* ``trapezoid_stress_stress`` / ``trapezoid_stress_rotation`` apply the
  vertex (trapezoid) quadrature that decouples stress unknowns by vertex.
* ``gauss_rule`` provides tensor-product Gauss-Legendre rules for exact
  integrals and error norms.

The nodal stress basis has a key locality property: every basis tensor
vanishes identically (as a full tensor) at the three reference corners it is
not associated with, so a vertex quadrature rule couples only the four basis
tensors of each corner.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "ElementGeometry",
    "ReferenceBasis",
    "QuadratureRule",
    "reference_basis",
    "gauss_rule",
    "trapezoid_rule",
    "piola_stress",
    "trapezoid_stress_stress",
    "trapezoid_stress_stress_physical",
    "trapezoid_stress_rotation",
    "trapezoid_stress_gram",
    "exact_stress_gram",
    "exact_div_pairing",
    "SKEW_UNIT",
]

#: Reference corners, counterclockwise.
REF_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])

#: Outward unit normal of reference edge l (edge l runs corner l -> l+1).
EDGE_NORMALS = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])

#: Unit skew matrix spanning the rotation space.
SKEW_UNIT = np.array([[0.0, 1.0], [-1.0, 0.0]])


class DegenerateElementError(ValueError):
    """Raised when an element's Jacobian determinant is not positive."""


def _as_points(points) -> tuple[np.ndarray, bool]:
    """Normalize to an (n, 2) array; report whether input was a single point."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        return pts[None, :], True
    return pts, False


class ElementGeometry:
    """Bilinear map of one quadrilateral cell and its derivatives.

    Parameters
    ----------
    corners : (4, 2) array_like
        Physical corner coordinates, counterclockwise.
    """

    def __init__(self, corners):
        self.corners = np.asarray(corners, dtype=float).reshape(4, 2)
        self._r1 = self.corners[0]
        self._r21 = self.corners[1] - self.corners[0]
        self._r41 = self.corners[3] - self.corners[0]
        # Deviation from a parallelogram; zero iff the map is affine.
        self._d = (self.corners[2] - self.corners[3]) - self._r21

    def map(self, points):
        """Physical image of reference points, shape (n, 2) (or (2,))."""
        pts, single = _as_points(points)
        x, y = pts[:, 0], pts[:, 1]
        out = (
            self._r1[None, :]
            + x[:, None] * self._r21[None, :]
            + y[:, None] * self._r41[None, :]
            + (x * y)[:, None] * self._d[None, :]
        )
        return out[0] if single else out

    def jacobian_matrix(self, points):
        """Jacobian matrix at reference points, shape (n, 2, 2) (or (2, 2))."""
        pts, single = _as_points(points)
        x, y = pts[:, 0], pts[:, 1]
        out = np.empty((len(pts), 2, 2))
        out[:, :, 0] = self._r21[None, :] + y[:, None] * self._d[None, :]
        out[:, :, 1] = self._r41[None, :] + x[:, None] * self._d[None, :]
        return out[0] if single else out

    def jacobian_det(self, points):
        """Jacobian determinant at reference points, shape (n,) (or scalar)."""
        pts, single = _as_points(points)
        df = self.jacobian_matrix(pts)
        det = df[:, 0, 0] * df[:, 1, 1] - df[:, 0, 1] * df[:, 1, 0]
        return float(det[0]) if single else det

    def corner_jacobians(self):
        """(DF_i, J_i) at the four reference corners; raises if any J <= 0."""
        df = self.jacobian_matrix(REF_CORNERS)
        det = df[:, 0, 0] * df[:, 1, 1] - df[:, 0, 1] * df[:, 1, 0]
        if np.any(det <= 0):
            raise DegenerateElementError("non-positive Jacobian at a corner")
        return df, det

    def is_parallelogram(self, tol: float = 0.0) -> bool:
        return bool(np.linalg.norm(self._d) <= tol)


@dataclass(frozen=True)
class QuadratureRule:
    """Reference-square quadrature rule; weights sum to the square's area 1."""

    points: np.ndarray
    weights: np.ndarray


def gauss_rule(order: int) -> QuadratureRule:
    """Tensor-product Gauss-Legendre rule on the unit square.

    Exact for polynomials of degree <= 2*order - 1 in each variable.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    t, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (t + 1.0)
    w = 0.5 * w
    xx, yy = np.meshgrid(x, x, indexing="ij")
    ww = np.outer(w, w)
    return QuadratureRule(
        points=np.stack([xx.ravel(), yy.ravel()], axis=1), weights=ww.ravel()
    )


def trapezoid_rule() -> QuadratureRule:
    """The four-corner vertex rule with equal weights 1/4."""
    return QuadratureRule(points=REF_CORNERS.copy(), weights=np.full(4, 0.25))


class ReferenceBasis:
    """Nodal bases of the stress, displacement, and rotation spaces.

    The 16 stress degrees of freedom are indexed ``4*edge + 2*endpoint + row``
    where ``edge`` is the reference edge (0..3, counterclockwise from the
    bottom), ``endpoint`` selects the edge's start (0) or end (1) corner, and
    ``row`` the tensor row.  Basis ``j`` has outward-normal trace of row
    ``row`` equal to 1 at its edge endpoint and 0 at every other
    edge/endpoint pair, which makes the basis vanish entirely at the three
    corners it is not associated with.
    """

    #: monomial generators of one (vector-valued) row of the stress space
    _N_GEN = 8

    def __init__(self):
        self.dof_edge = np.repeat(np.arange(4), 4)
        self.dof_endpoint = np.tile(np.repeat(np.arange(2), 2), 4)
        self.dof_row = np.tile(np.arange(2), 8)
        # Corner that a degree of freedom's endpoint lives at.
        self.dof_corner = np.array(
            [(e + m) % 4 for e, m in zip(self.dof_edge, self.dof_endpoint)]
        )
        # Degrees of freedom grouped per corner (4 per corner).
        self.corner_dofs = np.array(
            [np.where(self.dof_corner == k)[0] for k in range(4)]
        )
        self.coef = self._solve_nodal_coefficients()
        # Divergence of each vector basis function (a constant).
        self.vector_div = self.coef[:, 1] + self.coef[:, 5]
        # Row-wise divergence of each tensor basis member: constant 2-vector.
        self.stress_div = np.zeros((16, 2))
        for j in range(16):
            self.stress_div[j, self.dof_row[j]] = self.vector_div[
                2 * self.dof_edge[j] + self.dof_endpoint[j]
            ]
        self.displacement_basis = np.eye(2)
        self.rotation_q0 = SKEW_UNIT.copy()

    @staticmethod
    def _generator_values(points) -> np.ndarray:
        """Values of the 8 monomial generators, shape (8, n, 2)."""
        pts, _ = _as_points(points)
        x, y = pts[:, 0], pts[:, 1]
        zero = np.zeros_like(x)
        one = np.ones_like(x)
        return np.array(
            [
                [one, zero],
                [x, zero],
                [y, zero],
                [zero, one],
                [zero, x],
                [zero, y],
                [x**2, -2 * x * y],
                [2 * x * y, -(y**2)],
            ]
        ).transpose(0, 2, 1)

    def _solve_nodal_coefficients(self) -> np.ndarray:
        """Coefficients of the 8 nodal vector basis functions over generators."""
        dof_matrix = np.empty((8, 8))
        for e in range(4):
            for m in range(2):
                corner = REF_CORNERS[(e + m) % 4]
                gen = self._generator_values(corner)[:, 0, :]  # (8, 2)
                dof_matrix[2 * e + m] = gen @ EDGE_NORMALS[e]
        return np.linalg.inv(dof_matrix).T

    def vector_values(self, points) -> np.ndarray:
        """Nodal vector basis values, shape (8, n, 2)."""
        gen = self._generator_values(points)
        return np.einsum("jk,knc->jnc", self.coef, gen)

    def stress_values(self, points) -> np.ndarray:
        """Nodal tensor basis values, shape (16, n, 2, 2)."""
        pts, _ = _as_points(points)
        vec = self.vector_values(pts)
        out = np.zeros((16, len(pts), 2, 2))
        for j in range(16):
            out[j, :, self.dof_row[j], :] = vec[2 * self.dof_edge[j] + self.dof_endpoint[j]]
        return out

    @staticmethod
    def rotation_q1_values(points) -> np.ndarray:
        """Bilinear nodal shape functions at reference points, shape (4, n)."""
        pts, _ = _as_points(points)
        x, y = pts[:, 0], pts[:, 1]
        return np.array([(1 - x) * (1 - y), x * (1 - y), x * y, (1 - x) * y])

    def dof_functional(self, tensor_values_at_corners) -> np.ndarray:
        """Apply the 16 defining functionals to a tensor field.

        Parameters
        ----------
        tensor_values_at_corners : (16,) -> callable or (n, 4, 2, 2) array
            Tensor values at the four reference corners, one leading axis per
            evaluated field.

        Returns
        -------
        (n, 16) array of normal-component values, ordered like the basis.
        """
        vals = np.asarray(tensor_values_at_corners, dtype=float)
        single = vals.ndim == 3
        if single:
            vals = vals[None]
        out = np.empty((len(vals), 16))
        for j in range(16):
            corner = self.dof_corner[j]
            normal = EDGE_NORMALS[self.dof_edge[j]]
            out[:, j] = vals[:, corner, self.dof_row[j], :] @ normal
        return out[0] if single else out


@lru_cache(maxsize=1)
def reference_basis() -> ReferenceBasis:
    """The shared, immutable reference basis instance."""
    return ReferenceBasis()


def _compliance_matrices(compliance_at_vertices) -> np.ndarray:
    """Normalize compliance input to four 4x4 matrices acting on vec(tau).

    Accepts None (identity operator), a single (4, 4) matrix, or a (4, 4, 4)
    array with one matrix per element corner.  vec(tau) ordering is row-major
    (t00, t01, t10, t11).
    """
    if compliance_at_vertices is None:
        return np.broadcast_to(np.eye(4), (4, 4, 4)).copy()
    arr = np.asarray(compliance_at_vertices, dtype=float)
    if arr.shape == (4, 4):
        return np.broadcast_to(arr, (4, 4, 4)).copy()
    if arr.shape == (4, 4, 4):
        return arr
    raise ValueError("compliance must be None, one 4x4 matrix, or four of them")


def piola_stress(geometry: ElementGeometry, ref_tensor_fn, ref_point) -> np.ndarray:
    """Map a reference tensor field to the physical element row by row.

    Each row transforms like a flux: physical tensor = (1/J) tau_hat DF^T.
    This preserves edge normal components (scaled by edge measure) and the
    divergence pairing with constants.

    Parameters
    ----------
    geometry : ElementGeometry
    ref_tensor_fn : callable
        Maps a reference point (2,) to a 2x2 reference tensor.
    ref_point : (2,) array_like

    Returns
    -------
    (2, 2) physical tensor at the reference point.
    """
    pt = np.asarray(ref_point, dtype=float)
    jac = geometry.jacobian_det(pt)
    if jac <= 0:
        raise DegenerateElementError(f"Jacobian {jac} <= 0 at {pt}")
    df = geometry.jacobian_matrix(pt)
    tau_hat = np.asarray(ref_tensor_fn(pt), dtype=float)
    return (tau_hat @ df.T) / jac


def _pull_back_corner_tensors(geometry: ElementGeometry, physical_vals) -> tuple:
    """Reference tensors at the corners from physical corner values."""
    df, det = geometry.corner_jacobians()
    phys = np.asarray(physical_vals, dtype=float).reshape(4, 2, 2)
    inv_t = np.linalg.inv(df).transpose(0, 2, 1)  # DF^{-T} per corner
    hat = det[:, None, None] * np.einsum("kij,kjl->kil", phys, inv_t)
    return hat, df, det


def trapezoid_stress_stress(
    geometry: ElementGeometry,
    compliance_at_vertices,
    tau_vertex_values,
    chi_vertex_values,
) -> float:
    """Vertex-quadrature energy pairing of two stress fields on one element.

    Takes the physical tensor values of both fields at the four element
    corners, pulls them back to the reference square, and applies the
    four-corner rule

        (1/4) * sum_i A_i (tau_hat_i DF_i^T) : (chi_hat_i DF_i^T) / J_i,

    which agrees with integrating A tau : chi by the vertex rule directly on
    the physical element (see :func:`trapezoid_stress_stress_physical`).
    """
    amats = _compliance_matrices(compliance_at_vertices)
    tau_hat, df, det = _pull_back_corner_tensors(geometry, tau_vertex_values)
    chi_hat, _, _ = _pull_back_corner_tensors(geometry, chi_vertex_values)
    total = 0.0
    for i in range(4):
        t = tau_hat[i] @ df[i].T
        c = chi_hat[i] @ df[i].T
        a_t = (amats[i] @ t.reshape(4)).reshape(2, 2)
        total += float((a_t * c).sum()) / det[i]
    return 0.25 * total


def trapezoid_stress_stress_physical(
    geometry: ElementGeometry,
    compliance_at_vertices,
    tau_vertex_values,
    chi_vertex_values,
) -> float:
    """Same rule written directly on the physical element.

    Equals (1/2) * sum_i |T_i| A(r_i) tau(r_i) : chi(r_i) with |T_i| the area
    of the corner triangle spanned by the two edges meeting at corner r_i.
    """
    amats = _compliance_matrices(compliance_at_vertices)
    tau = np.asarray(tau_vertex_values, dtype=float).reshape(4, 2, 2)
    chi = np.asarray(chi_vertex_values, dtype=float).reshape(4, 2, 2)
    x = geometry.corners
    total = 0.0
    for i in range(4):
        fwd = x[(i + 1) % 4] - x[i]
        bwd = x[(i - 1) % 4] - x[i]
        tri = 0.5 * abs(fwd[0] * bwd[1] - fwd[1] * bwd[0])
        a_t = (amats[i] @ tau[i].reshape(4)).reshape(2, 2)
        total += tri * float((a_t * chi[i]).sum())
    return 0.5 * total


def trapezoid_stress_rotation(
    geometry: ElementGeometry, tau_vertex_values, xi_vertex_values
) -> float:
    """Vertex-quadrature pairing of a stress with a skew rotation field.

    Physical corner values of both fields; the rotation maps by composition,
    so its reference corner values equal its physical ones:

        (1/4) * sum_i (tau_hat_i DF_i^T) : xi_i.
    """
    tau_hat, df, _ = _pull_back_corner_tensors(geometry, tau_vertex_values)
    xi = np.asarray(xi_vertex_values, dtype=float).reshape(4, 2, 2)
    total = 0.0
    for i in range(4):
        total += float(((tau_hat[i] @ df[i].T) * xi[i]).sum())
    return 0.25 * total


def trapezoid_stress_gram(geometry: ElementGeometry, compliance_at_vertices=None):
    """16x16 vertex-rule energy matrix of the nodal stress basis.

    Block structure: only the four degrees of freedom of a shared corner
    couple, so with corner-grouped ordering the matrix is block diagonal with
    four 4x4 blocks.
    """
    basis = reference_basis()
    amats = _compliance_matrices(compliance_at_vertices)
    df, det = geometry.corner_jacobians()
    vals = basis.stress_values(REF_CORNERS)  # (16, 4, 2, 2)
    gram = np.zeros((16, 16))
    for k in range(4):
        dofs = basis.corner_dofs[k]
        t = vals[dofs, k] @ df[k].T  # (4, 2, 2)
        a_t = np.einsum("pq,aq->ap", amats[k], t.reshape(4, 4))
        gram[np.ix_(dofs, dofs)] += 0.25 / det[k] * (a_t @ t.reshape(4, 4).T)
    return gram


def exact_stress_gram(
    geometry: ElementGeometry, compliance_matrix=None, order: int = 6
) -> np.ndarray:
    """16x16 exact (Gauss) energy matrix of the mapped nodal stress basis.

    Unlike the vertex rule, exact integration couples all 16 stress degrees
    of freedom of the element; this matrix is dense.
    """
    basis = reference_basis()
    rule = gauss_rule(order)
    amat = np.eye(4) if compliance_matrix is None else np.asarray(compliance_matrix)
    df = geometry.jacobian_matrix(rule.points)
    det = geometry.jacobian_det(rule.points)
    vals = basis.stress_values(rule.points)  # (16, nq, 2, 2)
    mapped = np.einsum("anij,nkj->anik", vals, df)  # tau_hat DF^T
    a_mapped = np.einsum("pq,anq->anp", amat, mapped.reshape(16, -1, 4))
    w = rule.weights / det
    return np.einsum("anp,bnp,n->ab", a_mapped, mapped.reshape(16, -1, 4), w)


def exact_div_pairing(
    geometry: ElementGeometry, stress_basis_index: int, displacement_basis_index: int
) -> float:
    """Exact integral of (row-wise div of a stress basis) dot (a constant).

    The Piola transform makes this identical on every element: each basis
    member's divergence is the constant 1/2 in its own tensor row, so the
    pairing is 1/2 when the rows match and 0 otherwise.
    """
    basis = reference_basis()
    if not 0 <= stress_basis_index < 16:
        raise IndexError("stress basis index out of range")
    if not 0 <= displacement_basis_index < 2:
        raise IndexError("displacement basis index out of range")
    # |reference square| = 1, divergence constant: integral = value.
    return float(basis.stress_div[stress_basis_index, displacement_basis_index])
