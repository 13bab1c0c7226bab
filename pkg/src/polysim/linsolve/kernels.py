"""Compiled ILU(0) kernels on CSR arrays with sorted column indices."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def diagonal_positions(n, indptr, indices):
    """Position of each diagonal entry; -1 when the entry is not stored."""
    diag = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for jj in range(indptr[i], indptr[i + 1]):
            if indices[jj] == i:
                diag[i] = jj
                break
    return diag


@njit(cache=True, nogil=True)
def ilu0_factor(n, indptr, indices, data, diag, pivot_tol):
    """In-place ILU(0): unit-lower L and U share the pattern of ``data``.

    Returns -1 on success or the row index of the first tiny pivot.
    """
    marker = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        start, end = indptr[i], indptr[i + 1]
        for jj in range(start, end):
            marker[indices[jj]] = jj
        for kk in range(start, end):
            k = indices[kk]
            if k >= i:
                break
            piv = data[diag[k]]
            lik = data[kk] / piv
            data[kk] = lik
            for pp in range(diag[k] + 1, indptr[k + 1]):
                pos = marker[indices[pp]]
                if pos >= 0:
                    data[pos] -= lik * data[pp]
        for jj in range(start, end):
            marker[indices[jj]] = -1
        if abs(data[diag[i]]) <= pivot_tol:
            return i
    return -1


@njit(cache=True, nogil=True)
def ilu0_solve(n, indptr, indices, data, diag, b):
    x = b.copy()
    for i in range(n):
        s = x[i]
        for jj in range(indptr[i], diag[i]):
            s -= data[jj] * x[indices[jj]]
        x[i] = s
    for i in range(n - 1, -1, -1):
        s = x[i]
        for jj in range(diag[i] + 1, indptr[i + 1]):
            s -= data[jj] * x[indices[jj]]
        x[i] = s / data[diag[i]]
    return x


@njit(cache=True, nogil=True)
def extract_block_diagonal(indptr, indices, data, block_of, block_start, nblocks, bs):
    """Dense diagonal blocks ``(nblocks, bs, bs)``; unused slots of short blocks stay zero."""
    out = np.zeros((nblocks, bs, bs))
    n = indptr.size - 1
    for i in range(n):
        b = block_of[i]
        s = block_start[b]
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            if block_of[j] == b:
                out[b, i - s, j - s] = data[jj]
    return out
