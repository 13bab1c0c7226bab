"""Zero fill-in incomplete LU factorization."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .kernels import diagonal_positions, ilu0_factor, ilu0_solve


class ZeroPivotError(ArithmeticError):
    pass


class ILU0:
    """ILU(0) of a square sparse matrix.

    A tiny pivot triggers one retry with the diagonal shifted by
    ``1e-8 * max|diag|``; a second failure raises :class:`ZeroPivotError`.
    """

    def __init__(self, A: sp.spmatrix, shift: float = 1e-8):
        A = sp.csr_matrix(A, dtype=float)
        n = A.shape[0]
        # make sure every diagonal entry is stored; stored zeros stay in the pattern
        C = A.tocoo()
        missing = np.setdiff1d(np.arange(n), C.row[C.row == C.col])
        A = sp.coo_matrix(
            (np.concatenate([C.data, np.zeros(missing.size)]),
             (np.concatenate([C.row, missing]), np.concatenate([C.col, missing]))),
            shape=(n, n),
        ).tocsr()
        A.sort_indices()
        self.n = n
        self.indptr = A.indptr.astype(np.int64)
        self.indices = A.indices.astype(np.int64)
        self.diag = diagonal_positions(n, self.indptr, self.indices)
        base = A.data.copy()
        dmax = np.abs(base[self.diag]).max() if n else 0.0
        tol = 1e-300 if dmax == 0.0 else 1e-14 * dmax
        self.shifted = False
        data = base.copy()
        bad = ilu0_factor(n, self.indptr, self.indices, data, self.diag, tol)
        if bad >= 0:
            data = base.copy()
            delta = shift * (dmax if dmax > 0 else 1.0)
            d = data[self.diag]
            data[self.diag] = d + np.where(d >= 0, delta, -delta)
            self.shifted = True
            bad = ilu0_factor(n, self.indptr, self.indices, data, self.diag, tol * 1e-6)
            if bad >= 0:
                raise ZeroPivotError(f"zero pivot in ILU(0) at row {bad}")
        self.data = data

    def solve(self, b: np.ndarray) -> np.ndarray:
        return ilu0_solve(self.n, self.indptr, self.indices, self.data, self.diag, np.asarray(b, dtype=float))
