"""Classical (Ruge-Stueben) algebraic multigrid for the pressure system.

Strength of connection, C/F splitting and direct interpolation come from
pyamg; the Galerkin products, smoothers, coarse solve and V-cycle are here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from pyamg.classical import split
from pyamg.classical.interpolate import direct_interpolation
from pyamg.relaxation.relaxation import gauss_seidel
from pyamg.strength import classical_strength_of_connection


@dataclass
class AMGConfig:
    theta: float = 0.25
    max_levels: int = 10
    max_coarse: int = 100
    smoother: str = "JACOBI"  # or "GS"
    omega: float = 0.8
    presweeps: int = 1
    postsweeps: int = 1
    min_shrink: float = 0.1  # stop when a level shrinks by less than this fraction


@dataclass(eq=False)
class Level:
    A: sp.csr_matrix
    P: sp.csr_matrix | None = None
    R: sp.csr_matrix | None = None
    dinv: np.ndarray = field(default_factory=lambda: np.zeros(0))


class AMGHierarchy:
    def __init__(self, A: sp.spmatrix, config: AMGConfig | None = None):
        self.config = cfg = config or AMGConfig()
        A = sp.csr_matrix(A, dtype=float)
        self.levels: list[Level] = []
        while True:
            lvl = Level(A, dinv=_safe_inverse(A.diagonal()))
            self.levels.append(lvl)
            n = A.shape[0]
            if len(self.levels) >= cfg.max_levels or n <= cfg.max_coarse:
                break
            S = classical_strength_of_connection(A, theta=cfg.theta, norm="abs")
            splitting = split.RS(S)
            nc = int(np.count_nonzero(splitting))
            if nc == 0 or nc > (1.0 - cfg.min_shrink) * n:
                break
            P = direct_interpolation(A, S, splitting).tocsr()
            R = P.T.tocsr()
            lvl.P, lvl.R = P, R
            A = (R @ A @ P).tocsr()
        coarse = self.levels[-1].A
        self._coarse_lu = la.lu_factor(coarse.toarray()) if coarse.shape[0] else None

    @property
    def nlevels(self) -> int:
        return len(self.levels)

    def operator_complexity(self) -> float:
        return sum(l.A.nnz for l in self.levels) / self.levels[0].A.nnz

    def _smooth(self, lvl: Level, x: np.ndarray, b: np.ndarray, sweeps: int, forward: bool) -> np.ndarray:
        cfg = self.config
        for _ in range(sweeps):
            if cfg.smoother == "GS":
                gauss_seidel(lvl.A, x, b, iterations=1, sweep="forward" if forward else "backward")
            else:
                x = x + cfg.omega * lvl.dinv * (b - lvl.A @ x)
        return x

    def _cycle(self, k: int, b: np.ndarray) -> np.ndarray:
        lvl = self.levels[k]
        if k == len(self.levels) - 1:
            if self._coarse_lu is None:
                return np.zeros_like(b)
            return la.lu_solve(self._coarse_lu, b)
        x = self._smooth(lvl, np.zeros_like(b), b, self.config.presweeps, True)
        r = b - lvl.A @ x
        x = x + lvl.P @ self._cycle(k + 1, lvl.R @ r)
        return self._smooth(lvl, x, b, self.config.postsweeps, False)

    def vcycle(self, b: np.ndarray) -> np.ndarray:
        """One V-cycle from a zero initial guess."""
        return self._cycle(0, np.asarray(b, dtype=float))


def _safe_inverse(d: np.ndarray) -> np.ndarray:
    out = np.zeros_like(d)
    nz = d != 0.0
    out[nz] = 1.0 / d[nz]
    return out
