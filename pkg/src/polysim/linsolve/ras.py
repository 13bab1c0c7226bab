"""Restricted additive Schwarz with ILU(0) subdomain solves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..runtime import WorkerTeam
from .ilu import ILU0


@dataclass(eq=False)
class Subdomain:
    """``ext`` lists the unknowns of the extended subdomain, owned ones first."""

    owned: np.ndarray
    ext: np.ndarray


def contiguous_subdomains(offsets: np.ndarray) -> list[Subdomain]:
    """Non-overlapping subdomains from contiguous ownership ranges."""
    out = []
    for r in range(len(offsets) - 1):
        idx = np.arange(offsets[r], offsets[r + 1], dtype=np.int64)
        out.append(Subdomain(idx, idx))
    return out


def grow_overlap(A: sp.csr_matrix, owned: np.ndarray, layers: int) -> np.ndarray:
    """Extend ``owned`` by ``layers`` rings of matrix-graph neighbours.

    The result keeps ``owned`` first, followed by added unknowns ascending.
    """
    inside = np.zeros(A.shape[0], dtype=bool)
    inside[owned] = True
    front = owned
    for _ in range(layers):
        if front.size == 0:
            break
        nb = np.unique(A[front].indices)
        nb = nb[~inside[nb]]
        inside[nb] = True
        front = nb
    extra = np.nonzero(inside)[0]
    extra = extra[~np.isin(extra, owned)]
    return np.concatenate([owned, extra]).astype(np.int64)


class RAS:
    """``y = sum_i R_i^0 (A_i)^{-1} R_i f`` with ILU(0) approximating ``A_i^{-1}``.

    Each worker factors its extended block once and writes only its owned
    entries of ``y``, so no averaging happens in the overlap.
    """

    def __init__(self, A: sp.spmatrix, subdomains: list[Subdomain], team: WorkerTeam | None = None):
        A = sp.csr_matrix(A)
        self.n = A.shape[0]
        self.subdomains = subdomains
        self.team = team if team is not None and team.nworkers == len(subdomains) else None
        if self.team is not None:
            self.factors = self.team.run(self._factor, [A] * len(subdomains))
        else:
            self.factors = [self._factor(r, A) for r in range(len(subdomains))]

    def _factor(self, rank: int, A: sp.csr_matrix) -> ILU0:
        ext = self.subdomains[rank].ext
        return ILU0(A[ext][:, ext])

    def _local(self, rank: int, f: np.ndarray) -> np.ndarray:
        sd = self.subdomains[rank]
        return self.factors[rank].solve(f[sd.ext])[: sd.owned.size]

    def apply(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        y = np.zeros(self.n)
        k = len(self.subdomains)
        parts = self.team.run(self._local, [f] * k) if self.team is not None else [self._local(r, f) for r in range(k)]
        for sd, part in zip(self.subdomains, parts):
            y[sd.owned] = part
        return y

    __call__ = apply


def ras_apply(A: sp.spmatrix, f: np.ndarray, subdomains: list[Subdomain]) -> np.ndarray:
    """One-shot RAS application (setup plus apply)."""
    return RAS(A, subdomains).apply(f)
