"""CPR-FP two-stage preconditioner and the linear solver front end.

Stage 1 is RAS-ILU(0) on the full system, stage 2 one AMG V-cycle on the
pressure subsystem:

    y = D_r(J)^{-1} f;  r = f - J y;  y = y + P_p M_g(J_pp)^{-1} P_r r

Before both stages the system is left-scaled by the inverse of its
diagonal blocks (3x3 per cell, 1x1 per well), which makes every pressure
row carry the total-mass pressure coupling and removes zero pivots.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..runtime import WorkerTeam
from .amg import AMGConfig, AMGHierarchy
from .dist import DistMatrix, make_dots
from .gmres import SolveStats, gmres
from .kernels import extract_block_diagonal
from .ras import RAS, Subdomain, contiguous_subdomains, grow_overlap

PRECONDITIONERS = ("CPR", "ILU0", "NONE")


@dataclass
class PreconditionerConfig:
    kind: str = "CPR"
    overlap: int = 1
    single_subdomain: bool = False
    decouple: bool = True
    amg: AMGConfig = field(default_factory=AMGConfig)
    restart: int = 30
    maxiter: int = 200

    def __post_init__(self):
        if self.overlap < 0:
            raise ValueError("overlap must be >= 0")
        if self.restart < 1:
            raise ValueError("restart must be >= 1")
        if self.kind not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {self.kind!r}")


class PressureRestriction:
    """Selection of the pressure unknowns out of the full vector and back."""

    def __init__(self, pressure_dofs: np.ndarray, n: int):
        self.dofs = np.asarray(pressure_dofs, dtype=np.int64)
        self.n = n

    def restrict(self, x: np.ndarray) -> np.ndarray:
        if x.shape[0] != self.n:
            raise ValueError(f"expected length {self.n}, got {x.shape[0]}")
        return x[self.dofs]

    def prolong(self, p: np.ndarray) -> np.ndarray:
        if p.shape[0] != self.dofs.size:
            raise ValueError(f"expected length {self.dofs.size}, got {p.shape[0]}")
        out = np.zeros(self.n)
        out[self.dofs] = p
        return out


def restrict_pressure(x: np.ndarray, pressure_dofs: np.ndarray) -> np.ndarray:
    return PressureRestriction(pressure_dofs, x.shape[0]).restrict(x)


def prolong_pressure(p: np.ndarray, pressure_dofs: np.ndarray, n: int) -> np.ndarray:
    return PressureRestriction(pressure_dofs, n).prolong(p)


def extract_pressure_matrix(J: sp.spmatrix, pressure_dofs: np.ndarray, tiny: float = 1e-300) -> sp.csr_matrix:
    """Pressure-pressure scalars of every cell block; well rows and columns dropped.

    Rows whose diagonal vanishes are replaced by identity rows so that the
    AMG smoother stays defined.
    """
    J = sp.csr_matrix(J)
    A = J[pressure_dofs][:, pressure_dofs].tocsr()
    A.sort_indices()
    d = A.diagonal()
    bad = np.nonzero(np.abs(d) <= tiny)[0]
    if bad.size:
        A = A.tolil()
        for i in bad:
            A.rows[i] = [i]
            A.data[i] = [1.0]
        A = A.tocsr()
    return A


def block_structure(n: int, pressure_dofs: np.ndarray, nvar: int) -> tuple[np.ndarray, np.ndarray]:
    """Block id of every unknown and block starts: cell blocks of ``nvar``, singletons elsewhere."""
    block_of = np.full(n, -1, dtype=np.int64)
    starts = []
    ncell = pressure_dofs.size
    for v in range(nvar):
        block_of[pressure_dofs + v] = np.arange(ncell)
    singles = np.nonzero(block_of < 0)[0]
    block_of[singles] = ncell + np.arange(singles.size)
    starts = np.concatenate([pressure_dofs, singles]).astype(np.int64)
    return block_of, starts


def block_diagonal_inverse(J: sp.spmatrix, pressure_dofs: np.ndarray, nvar: int = 3) -> sp.csr_matrix:
    """Sparse inverse of the block diagonal; singular blocks are left as identity."""
    J = sp.csr_matrix(J)
    n = J.shape[0]
    block_of, starts = block_structure(n, pressure_dofs, nvar)
    nb = starts.size
    ncell = pressure_dofs.size
    B = extract_block_diagonal(J.indptr, J.indices.astype(np.int64), J.data, block_of, starts, nb, nvar)
    # pad well singletons so every block is invertible as nvar x nvar
    pad = np.arange(1, nvar)
    B[ncell:, pad, pad] = 1.0
    Binv = np.empty_like(B)
    det = np.linalg.det(B)
    scale = np.abs(B).max(axis=(1, 2))
    ok = np.abs(det) > 1e-14 * np.maximum(scale, 1e-300) ** nvar
    Binv[ok] = np.linalg.inv(B[ok])
    Binv[~ok] = np.eye(nvar)
    rows, cols, vals = [], [], []
    cb = np.arange(ncell)
    for a in range(nvar):
        for b in range(nvar):
            rows.append(pressure_dofs + a)
            cols.append(pressure_dofs + b)
            vals.append(Binv[cb, a, b])
    wb = np.arange(ncell, nb)
    rows.append(starts[wb])
    cols.append(starts[wb])
    vals.append(Binv[wb, 0, 0])
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def structural_product(A: sp.csr_matrix, B: sp.csr_matrix) -> sp.csr_matrix:
    """``A @ B`` stored on its structural pattern.

    scipy drops entries that cancel to exactly zero, which would make the
    ILU(0) pattern depend on roundoff inside the decoupled diagonal blocks.
    """
    A, B = sp.csr_matrix(A), sp.csr_matrix(B)
    n = B.shape[1]
    ones = lambda M: sp.csr_matrix((np.ones(M.nnz), M.indices, M.indptr), shape=M.shape)
    S = (ones(A) @ ones(B)).tocsr()
    S.sort_indices()
    P = (A @ B).tocsr()
    P.sort_indices()
    key = lambda M: np.repeat(np.arange(M.shape[0], dtype=np.int64), np.diff(M.indptr)) * n + M.indices
    data = np.zeros(S.nnz)
    data[np.searchsorted(key(S), key(P))] = P.data
    return sp.csr_matrix((data, S.indices, S.indptr), shape=S.shape)


class CPRPreconditioner:
    """CPR-FP (``stage2=True``) or plain RAS-ILU(0) (``stage2=False``)."""

    def __init__(
        self,
        J: sp.spmatrix,
        pressure_dofs: np.ndarray,
        subdomains: list[Subdomain],
        config: PreconditionerConfig | None = None,
        team: WorkerTeam | None = None,
        stage2: bool = True,
        nvar: int = 3,
    ):
        self.config = cfg = config or PreconditionerConfig()
        J = sp.csr_matrix(J)
        self.n = J.shape[0]
        self.pr = PressureRestriction(pressure_dofs, self.n)
        if cfg.decouple:
            self.dinv = block_diagonal_inverse(J, pressure_dofs, nvar)
            self.Jt = structural_product(self.dinv, J)
        else:
            self.dinv = None
            self.Jt = J
        self.ras = RAS(self.Jt, subdomains, team)
        self.stage2 = stage2
        self.amg = AMGHierarchy(extract_pressure_matrix(self.Jt, pressure_dofs), cfg.amg) if stage2 else None

    def apply(self, f: np.ndarray) -> np.ndarray:
        ft = self.dinv @ f if self.dinv is not None else f
        y = self.ras.apply(ft)
        if self.stage2:
            r = ft - self.Jt @ y
            y = y + self.pr.prolong(self.amg.vcycle(self.pr.restrict(r)))
        return y

    __call__ = apply


def cpr_fp_apply(J: sp.spmatrix, f: np.ndarray, pressure_dofs: np.ndarray, subdomains=None, config=None) -> np.ndarray:
    """One-shot CPR-FP application on a single subdomain unless given."""
    n = J.shape[0]
    sds = subdomains or contiguous_subdomains(np.array([0, n]))
    return CPRPreconditioner(J, pressure_dofs, sds, config).apply(f)


class LinearSolver:
    """GMRES with the configured preconditioner over a partitioned ordering.

    ``offsets`` delimit the contiguous worker ranges; ``pressure_dofs`` gives
    the pressure unknown of every cell in natural order and ``natural_perm``
    maps natural order into solver order (used when a single subdomain is
    forced).
    """

    def __init__(
        self,
        offsets: np.ndarray,
        pressure_dofs: np.ndarray,
        natural_perm: np.ndarray | None = None,
        team: WorkerTeam | None = None,
        config: PreconditionerConfig | None = None,
        nvar: int = 3,
    ):
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.pressure_dofs = np.asarray(pressure_dofs, dtype=np.int64)
        self.natural_perm = natural_perm
        self.team = team or WorkerTeam(len(self.offsets) - 1, threads=False)
        self.config = config or PreconditionerConfig()
        self.nvar = nvar
        self.dots = make_dots(self.offsets, self.team)
        self.last_setup_time = 0.0

    def subdomains(self, J: sp.csr_matrix) -> list[Subdomain]:
        cfg = self.config
        if cfg.single_subdomain:
            n = J.shape[0]
            perm = self.natural_perm if self.natural_perm is not None else np.arange(n)
            return [Subdomain(np.asarray(perm, dtype=np.int64), np.asarray(perm, dtype=np.int64))]
        out = []
        for r in range(len(self.offsets) - 1):
            owned = np.arange(self.offsets[r], self.offsets[r + 1], dtype=np.int64)
            ext = grow_overlap(J, owned, cfg.overlap) if len(self.offsets) > 2 else owned
            out.append(Subdomain(owned, ext))
        return out

    def setup(self, J: sp.spmatrix):
        J = sp.csr_matrix(J)
        t0 = time.perf_counter()
        kind = self.config.kind
        if kind == "NONE":
            precond = None
        else:
            team = None if self.config.single_subdomain else self.team
            precond = CPRPreconditioner(
                J, self.pressure_dofs, self.subdomains(J), self.config, team, stage2=(kind == "CPR"), nvar=self.nvar
            )
        self.last_setup_time = time.perf_counter() - t0
        return precond

    def solve(self, J: sp.spmatrix, b: np.ndarray, eta: float) -> tuple[np.ndarray, SolveStats]:
        J = sp.csr_matrix(J)
        precond = self.setup(J)
        A = DistMatrix(J, self.offsets, self.team)
        x, stats = gmres(
            A.matvec,
            b,
            eta,
            precond.apply if precond is not None else None,
            restart=self.config.restart,
            maxiter=self.config.maxiter,
            dots=self.dots,
        )
        stats.setup_time = self.last_setup_time
        return x, stats
