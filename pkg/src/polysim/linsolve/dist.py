"""Row-distributed sparse matrices and reductions over a worker team."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..runtime import WorkerTeam


class DistMatrix:
    """Matrix split into contiguous row blocks, one per worker.

    Each block stores its columns compressed to ``[owned range, ghosts]``;
    a product first receives ghost entries of ``x`` and then multiplies
    locally.
    """

    def __init__(self, A: sp.csr_matrix, offsets: np.ndarray, team: WorkerTeam):
        self.shape = A.shape
        self.offsets = offsets
        self.team = team
        self.global_matrix = A
        self.blocks = []
        if team.nworkers == 1:
            return
        for r in range(team.nworkers):
            lo, hi = int(offsets[r]), int(offsets[r + 1])
            blk = A[lo:hi]
            cols = np.unique(blk.indices)
            ghosts = cols[(cols < lo) | (cols >= hi)]
            local_cols = np.concatenate([np.arange(lo, hi), ghosts])
            remap = np.empty(A.shape[1], dtype=np.int64)
            remap[local_cols] = np.arange(local_cols.size)
            loc = sp.csr_matrix(
                (blk.data, remap[blk.indices], blk.indptr), shape=(hi - lo, local_cols.size)
            )
            self.blocks.append((lo, hi, ghosts, loc))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if self.team.nworkers == 1:
            return self.global_matrix @ x
        parts = self.team.run(self._local_matvec, [x] * self.team.nworkers)
        return np.concatenate(parts)

    def _local_matvec(self, rank: int, x: np.ndarray) -> np.ndarray:
        lo, hi, ghosts, loc = self.blocks[rank]
        return loc @ np.concatenate([x[lo:hi], x[ghosts]])

    def __matmul__(self, x):
        return self.matvec(x)


def make_dots(offsets: np.ndarray, team: WorkerTeam):
    """``dots(V, w)`` summing per-worker partial products in partition order."""
    segs = [(int(offsets[r]), int(offsets[r + 1])) for r in range(team.nworkers)]

    def dots(V: np.ndarray, w: np.ndarray) -> np.ndarray:
        if len(segs) == 1:
            return V @ w
        return team.global_reduce([V[:, a:b] @ w[a:b] for a, b in segs])

    return dots
