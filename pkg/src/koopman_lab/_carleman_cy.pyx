# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel for applying the block-triangular lifted operator.

Iterates the sparse tensor entries against strided index arithmetic; no dense
operator block is ever materialized.
"""


def apply_blocks_sparse(double complex[::1] out, double complex[::1] vin,
                        long d, long order, long[::1] offsets,
                        long[::1] degrees, rows_list, cols_list, vals_list):
    """Accumulate the operator action on ``vin`` into ``out``.

    ``offsets[i-1]`` starts block i (i = 1..order).  For each tensor degree
    ``degrees[t]`` the sparse entries are given by parallel arrays
    ``rows_list[t]``, ``cols_list[t]`` (row-major flattened multi-index) and
    ``vals_list[t]``.
    """
    cdef long t, k, dk, i, src, pos, left, right, e, a, b, nnz
    cdef long off_dst, off_src, base_dst, base_src
    cdef double complex val
    cdef long[::1] rows
    cdef long[::1] cols
    cdef double complex[::1] vals

    for t in range(degrees.shape[0]):
        k = degrees[t]
        dk = 1
        for e in range(k):
            dk *= d
        rows = rows_list[t]
        cols = cols_list[t]
        vals = vals_list[t]
        nnz = rows.shape[0]
        for i in range(1, order - k + 2):
            src = i + k - 1
            off_dst = offsets[i - 1]
            off_src = offsets[src - 1]
            right = 1
            for e in range(i - 1):
                right *= d
            left = 1
            # pos runs 1..i; left = d^(pos-1), right = d^(i-pos)
            for pos in range(1, i + 1):
                for e in range(nnz):
                    val = vals[e]
                    for a in range(left):
                        base_dst = off_dst + (a * d + rows[e]) * right
                        base_src = off_src + (a * dk + cols[e]) * right
                        for b in range(right):
                            out[base_dst + b] = out[base_dst + b] + \
                                val * vin[base_src + b]
                left *= d
                right //= d
