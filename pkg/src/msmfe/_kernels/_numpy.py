"""Pure numpy kernels mirroring the numba backend.

Same contracts as ``_numba`` (see that module's docstrings for the parameter
descriptions).  The assembly scatter is fully vectorized; the per-vertex
elimination and recovery loop in Python over blocks, using dense numpy
linear algebra on each small block.  Accumulation order matches the numba
backend, so each backend is deterministic; across backends values agree to
rounding.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "assemble_stress_blocks",
    "eliminate_vertex_blocks",
    "recover_stress",
]

_DOF_ROWS = np.array([0, 1, 0, 1])


def assemble_stress_blocks(
    gvec, det, amat, dof_off, signs, block_vertex, blk_off, bsize, out_vals
):
    """Vectorized twin of the numba assembly scatter."""
    # amat acts on row-major vec(tau); expose it as [row_p, i, row_q, j] and
    # gather the 2x2 sub-blocks for each (p, q) pair of corner DOFs.
    n_cells = gvec.shape[0]
    a_resh = amat.reshape(n_cells, 4, 2, 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    a_sel = a_resh[:, :, _DOF_ROWS[:, None], _DOF_ROWS[None, :]]  # (c,4,4,4,2,2)
    g_sel = gvec[:, :, [0, 0, 1, 1], :]  # (c,4,4,2): own, own, prev, prev
    core = np.einsum("ckpqij,ckpi,ckqj->ckpq", a_sel, g_sel, g_sel)
    vals = (
        core
        * signs[:, :, :, None]
        * signs[:, :, None, :]
        * (0.25 / det)[:, :, None, None]
    )
    kv = bsize[block_vertex]  # (c, 4)
    pos = (
        blk_off[block_vertex][:, :, None, None]
        + dof_off[:, :, :, None] * kv[:, :, None, None]
        + dof_off[:, :, None, :]
    )
    mask = (dof_off[:, :, :, None] >= 0) & (dof_off[:, :, None, :] >= 0)
    np.add.at(out_vals, pos[mask], vals[mask])


def eliminate_vertex_blocks(
    bptr, blk_off, bsize, block_vals, b_indptr, b_indices, b_data, rhs_stress, n_rows
):
    """Per-vertex factorization and Schur triplets (numpy implementation)."""
    n_blocks = len(bsize)
    row_lists = []
    for v in range(n_blocks):
        lo, hi = b_indptr[bptr[v]], b_indptr[bptr[v + 1]]
        row_lists.append(np.unique(b_indices[lo:hi]))
    m_counts = np.array([len(r) for r in row_lists], dtype=np.int64)

    row_off = np.zeros(n_blocks + 1, np.int64)
    np.cumsum(m_counts, out=row_off[1:])
    z_off = np.zeros(n_blocks + 1, np.int64)
    np.cumsum(m_counts * bsize, out=z_off[1:])
    trip_off = np.zeros(n_blocks + 1, np.int64)
    np.cumsum(m_counts * m_counts, out=trip_off[1:])

    row_map = np.empty(row_off[-1], np.int64)
    z_mat = np.zeros(z_off[-1], np.float64)
    trip_i = np.empty(trip_off[-1], np.int64)
    trip_j = np.empty(trip_off[-1], np.int64)
    trip_val = np.empty(trip_off[-1], np.float64)
    chol_vals = np.zeros_like(block_vals)
    z_all = np.zeros(bptr[-1], np.float64)
    rhs_add = np.zeros(n_rows, np.float64)

    for v in range(n_blocks):
        k = bsize[v]
        if k == 0:
            continue
        base = blk_off[v]
        g0 = bptr[v]
        kmat = block_vals[base : base + k * k].reshape(k, k)
        lmat = np.linalg.cholesky(kmat)
        chol_vals[base : base + k * k] = lmat.ravel()
        z = np.linalg.solve(lmat, rhs_stress[g0 : g0 + k])
        z_all[g0 : g0 + k] = z

        rows = row_lists[v]
        m = m_counts[v]
        if m == 0:
            continue
        row_map[row_off[v] : row_off[v + 1]] = rows

        lo, hi = b_indptr[g0], b_indptr[g0 + k]
        col_ids = np.repeat(np.arange(k), np.diff(b_indptr[g0 : g0 + k + 1]))
        bt = np.zeros((k, m))
        bt[col_ids, np.searchsorted(rows, b_indices[lo:hi])] = b_data[lo:hi]

        zmat = np.linalg.solve(lmat, bt)
        z_mat[z_off[v] : z_off[v + 1]] = zmat.ravel()

        grid_i, grid_j = np.meshgrid(rows, rows, indexing="ij")
        tb, te = trip_off[v], trip_off[v + 1]
        trip_i[tb:te] = grid_i.ravel()
        trip_j[tb:te] = grid_j.ravel()
        trip_val[tb:te] = (zmat.T @ zmat).ravel()
        np.add.at(rhs_add, rows, zmat.T @ z)

    return (
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
    )


def recover_stress(
    bptr, blk_off, bsize, chol_vals, z_all, row_off, row_map, z_off, z_mat, y
):
    """Per-vertex stress back-substitution (numpy implementation)."""
    n_blocks = len(bsize)
    sigma = np.zeros(bptr[-1], np.float64)
    for v in range(n_blocks):
        k = bsize[v]
        if k == 0:
            continue
        base = blk_off[v]
        g0 = bptr[v]
        m = row_off[v + 1] - row_off[v]
        w = z_all[g0 : g0 + k].copy()
        if m:
            zmat = z_mat[z_off[v] : z_off[v + 1]].reshape(k, m)
            w -= zmat @ y[row_map[row_off[v] : row_off[v + 1]]]
        lmat = chol_vals[base : base + k * k].reshape(k, k)
        sigma[g0 : g0 + k] = np.linalg.solve(lmat.T, w)
    return sigma
