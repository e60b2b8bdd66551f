"""Numba-compiled kernels: assembly scatter, block elimination, recovery.

All three kernels take flat, typed arrays (int64 indices, float64 values)
and loop in a fixed deterministic order.  See the package docstring for the
shared backend contract; the numpy twin in ``_numpy`` mirrors the semantics.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = [
    "assemble_stress_blocks",
    "eliminate_vertex_blocks",
    "recover_stress",
]


@njit(cache=True)
def assemble_stress_blocks(
    gvec, det, amat, dof_off, signs, block_vertex, blk_off, bsize, out_vals
):
    """Accumulate corner stress-energy blocks into packed vertex storage.

    For each cell corner the four incident stress degrees of freedom (two
    edges times two tensor rows) couple through the vertex quadrature weight
    1/(4 J) and the sampled 4x4 compliance matrix; the local tensor at the
    corner is the outer product of a row unit vector with the mapped edge
    normal ``g``.

    Parameters
    ----------
    gvec : (n_cells, 4, 2, 2) float64
        Mapped reference edge normals per corner: [corner, {own edge,
        previous edge}, component].
    det : (n_cells, 4) float64
        Corner Jacobian determinants.
    amat : (n_cells, 4, 4, 4) float64
        Compliance matrix (acting on row-major 2x2 tensors) sampled at each
        physical corner.
    dof_off : (n_cells, 4, 4) int64
        Offset of each corner degree of freedom inside its vertex block; -1
        marks a constrained (absent) degree of freedom.
    signs : (n_cells, 4, 4) float64
        Orientation signs aligning local outward traces with global ones.
    block_vertex : (n_cells, 4) int64
        Global vertex of each cell corner.
    blk_off : (n_vertices,) int64
        Start of each vertex block in ``out_vals``.
    bsize : (n_vertices,) int64
        Stress degrees of freedom per vertex block.
    out_vals : flat float64 array, zero-initialized
        Packed row-major k x k blocks, one per vertex.
    """
    n_cells = gvec.shape[0]
    for c in range(n_cells):
        for k in range(4):
            v = block_vertex[c, k]
            base = blk_off[v]
            kv = bsize[v]
            scale = 0.25 / det[c, k]
            a = amat[c, k]
            for p in range(4):
                ip = dof_off[c, k, p]
                if ip < 0:
                    continue
                rp = p & 1
                gp0 = gvec[c, k, p >> 1, 0]
                gp1 = gvec[c, k, p >> 1, 1]
                sp = signs[c, k, p]
                for q in range(4):
                    iq = dof_off[c, k, q]
                    if iq < 0:
                        continue
                    rq = q & 1
                    gq0 = gvec[c, k, q >> 1, 0]
                    gq1 = gvec[c, k, q >> 1, 1]
                    val = gp0 * (
                        a[2 * rp, 2 * rq] * gq0 + a[2 * rp, 2 * rq + 1] * gq1
                    ) + gp1 * (
                        a[2 * rp + 1, 2 * rq] * gq0 + a[2 * rp + 1, 2 * rq + 1] * gq1
                    )
                    out_vals[base + ip * kv + iq] += sp * signs[c, k, q] * scale * val


@njit(cache=True)
def eliminate_vertex_blocks(
    bptr, blk_off, bsize, block_vals, b_indptr, b_indices, b_data, rhs_stress, n_rows
):
    """Factor every vertex block and form the reduced-system ingredients.

    Per vertex block K_v (SPD, k x k) with constraint columns B_v (the
    vertex's columns of the stacked divergence/rotation matrix, m coupled
    rows) and stress load g_v, computes

        L_v = chol(K_v),  z_v = L_v^{-1} g_v,  Z_v = L_v^{-1} B_v^T,

    and emits the Schur triplets Z_v^T Z_v (scattered at the coupled global
    rows), the rhs contribution Z_v^T z_v, and the cache needed to recover
    the stress afterwards.

    Parameters
    ----------
    bptr : (n_vertices + 1,) int64
        Stress degree-of-freedom range of each vertex block.
    blk_off, bsize : (n_vertices,) int64
        Packed-block offsets and sizes (as in assemble_stress_blocks).
    block_vals : flat float64
        Packed vertex blocks (the assembled stress matrix).
    b_indptr, b_indices, b_data : CSC arrays (int64/int64/float64)
        The stacked constraint matrix, compressed by stress column.
    rhs_stress : (n_stress,) float64
        Stress-equation load (boundary data term).
    n_rows : int
        Row count of the constraint matrix (displacement + rotation DOFs).

    Returns
    -------
    chol_vals : packed Cholesky factors (lower triangles, layout of
        block_vals)
    z_all : (n_stress,) solved L^{-1} g per block
    row_off : (n_vertices + 1,) offsets into row_map
    row_map : coupled global row indices per block, sorted
    z_off : (n_vertices + 1,) offsets into z_mat
    z_mat : flat row-major (k x m) blocks L^{-1} B^T
    trip_off : (n_vertices + 1,) offsets into the triplet arrays
    trip_i, trip_j, trip_val : COO triplets of the Schur complement
    rhs_add : (n_rows,) reduced right-hand-side contribution
    """
    n_blocks = len(bsize)
    m_counts = np.zeros(n_blocks, np.int64)
    for v in range(n_blocks):
        lo = b_indptr[bptr[v]]
        hi = b_indptr[bptr[v + 1]]
        if hi == lo:
            continue
        rows = np.sort(b_indices[lo:hi])
        m = 1
        for i in range(1, len(rows)):
            if rows[i] != rows[i - 1]:
                m += 1
        m_counts[v] = m

    row_off = np.zeros(n_blocks + 1, np.int64)
    z_off = np.zeros(n_blocks + 1, np.int64)
    trip_off = np.zeros(n_blocks + 1, np.int64)
    for v in range(n_blocks):
        row_off[v + 1] = row_off[v] + m_counts[v]
        z_off[v + 1] = z_off[v] + m_counts[v] * bsize[v]
        trip_off[v + 1] = trip_off[v] + m_counts[v] * m_counts[v]

    row_map = np.empty(row_off[n_blocks], np.int64)
    z_mat = np.zeros(z_off[n_blocks], np.float64)
    trip_i = np.empty(trip_off[n_blocks], np.int64)
    trip_j = np.empty(trip_off[n_blocks], np.int64)
    trip_val = np.empty(trip_off[n_blocks], np.float64)
    chol_vals = np.zeros_like(block_vals)
    z_all = np.zeros(bptr[n_blocks], np.float64)
    rhs_add = np.zeros(n_rows, np.float64)

    for v in range(n_blocks):
        k = bsize[v]
        if k == 0:
            continue
        base = blk_off[v]
        g0 = bptr[v]
        kmat = np.empty((k, k))
        for i in range(k):
            for j in range(k):
                kmat[i, j] = block_vals[base + i * k + j]
        lmat = np.linalg.cholesky(kmat)
        for i in range(k):
            for j in range(k):
                chol_vals[base + i * k + j] = lmat[i, j]

        z = np.empty(k)
        for i in range(k):
            s = rhs_stress[g0 + i]
            for l in range(i):
                s -= lmat[i, l] * z[l]
            z[i] = s / lmat[i, i]
            z_all[g0 + i] = z[i]

        m = m_counts[v]
        if m == 0:
            continue
        lo = b_indptr[bptr[v]]
        hi = b_indptr[bptr[v + 1]]
        rows = np.sort(b_indices[lo:hi])
        rbase = row_off[v]
        cnt = 0
        for i in range(len(rows)):
            if i == 0 or rows[i] != rows[i - 1]:
                row_map[rbase + cnt] = rows[i]
                cnt += 1

        bt = np.zeros((k, m))
        local_rows = row_map[rbase : rbase + m]
        for c in range(k):
            col = g0 + c
            for idx in range(b_indptr[col], b_indptr[col + 1]):
                j = np.searchsorted(local_rows, b_indices[idx])
                bt[c, j] += b_data[idx]

        zb = z_off[v]
        for col in range(m):
            for i in range(k):
                s = bt[i, col]
                for l in range(i):
                    s -= lmat[i, l] * z_mat[zb + l * m + col]
                z_mat[zb + i * m + col] = s / lmat[i, i]

        tb = trip_off[v]
        for p in range(m):
            gp = row_map[rbase + p]
            acc_rhs = 0.0
            for l in range(k):
                acc_rhs += z_mat[zb + l * m + p] * z[l]
            rhs_add[gp] += acc_rhs
            for q in range(m):
                acc = 0.0
                for l in range(k):
                    acc += z_mat[zb + l * m + p] * z_mat[zb + l * m + q]
                trip_i[tb + p * m + q] = gp
                trip_j[tb + p * m + q] = row_map[rbase + q]
                trip_val[tb + p * m + q] = acc

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


@njit(cache=True)
def recover_stress(
    bptr, blk_off, bsize, chol_vals, z_all, row_off, row_map, z_off, z_mat, y
):
    """Back-substitute the stress coefficients from the elimination cache.

    Per vertex block: sigma_v = L_v^{-T} (z_v - Z_v y_v) where y_v gathers
    the solved reduced unknowns at the block's coupled rows.
    """
    n_blocks = len(bsize)
    sigma = np.zeros(bptr[n_blocks], np.float64)
    for v in range(n_blocks):
        k = bsize[v]
        if k == 0:
            continue
        base = blk_off[v]
        g0 = bptr[v]
        m = row_off[v + 1] - row_off[v]
        rbase = row_off[v]
        zb = z_off[v]
        w = np.empty(k)
        for i in range(k):
            s = z_all[g0 + i]
            for j in range(m):
                s -= z_mat[zb + i * m + j] * y[row_map[rbase + j]]
            w[i] = s
        for i in range(k - 1, -1, -1):
            s = w[i]
            for l in range(i + 1, k):
                s -= chol_vals[base + l * k + i] * sigma[g0 + l]
            sigma[g0 + i] = s / chol_vals[base + i * k + i]
    return sigma
