"""Hilbert space-filling-curve partitioning and halo plans."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import CartesianGrid


def hilbert_keys(coords: np.ndarray, bits: int) -> np.ndarray:
    """Hilbert index of integer points ``coords`` (shape ``(npts, ndim)``).

    Skilling's transpose algorithm, vectorized over points. Every coordinate
    must lie in ``[0, 2**bits)``.
    """
    X = [coords[:, d].astype(np.uint64) for d in range(coords.shape[1])]
    n = len(X)
    if n == 1:
        return X[0].copy()
    M = np.uint64(1 << (bits - 1))
    Q = M
    while Q > 1:
        P = Q - np.uint64(1)
        for i in range(n):
            hit = (X[i] & Q) != 0
            t = (X[0] ^ X[i]) & P
            x0 = np.where(hit, X[0] ^ P, X[0] ^ t)
            if i > 0:
                X[i] = np.where(hit, X[i], X[i] ^ t)
            X[0] = x0
        Q = Q >> np.uint64(1)
    for i in range(1, n):
        X[i] = X[i] ^ X[i - 1]
    t = np.zeros_like(X[0])
    Q = M
    while Q > 1:
        t = np.where((X[n - 1] & Q) != 0, t ^ (Q - np.uint64(1)), t)
        Q = Q >> np.uint64(1)
    X = [x ^ t for x in X]
    key = np.zeros_like(X[0])
    for b in range(bits - 1, -1, -1):
        for i in range(n):
            key = (key << np.uint64(1)) | ((X[i] >> np.uint64(b)) & np.uint64(1))
    return key


def hilbert_order(nx: int, ny: int, nz: int) -> np.ndarray:
    """Cells in Hilbert-curve order.

    Singleton axes are dropped so a 2-D grid is ordered by a 2-D curve.
    Ties (impossible for distinct cells, kept for safety) fall back to the
    natural index through the stable sort.
    """
    dims = (nx, ny, nz)
    n = nx * ny * nz
    cell = np.arange(n)
    ijk = np.stack([cell % nx, (cell // nx) % ny, cell // (nx * ny)], axis=1)
    axes = [d for d in range(3) if dims[d] > 1]
    if not axes:
        return cell
    bits = max(1, int(np.ceil(np.log2(max(dims[d] for d in axes)))))
    keys = hilbert_keys(ijk[:, axes], bits)
    return np.argsort(keys, kind="stable")


@dataclass(eq=False)
class PartitionMap:
    nparts: int
    owner: np.ndarray
    local_index: np.ndarray

    def owned(self, part: int) -> np.ndarray:
        """Cells owned by ``part`` in ascending natural order."""
        return np.nonzero(self.owner == part)[0]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.owner, minlength=self.nparts)


def hilbert_partition(grid: CartesianGrid, nparts: int) -> PartitionMap:
    n = grid.ncells
    if nparts < 1:
        raise ValueError("nparts must be >= 1")
    if nparts > n:
        raise ValueError(f"cannot split {n} cells into {nparts} partitions")
    order = hilbert_order(grid.nx, grid.ny, grid.nz)
    bounds = (np.arange(nparts + 1) * n) // nparts
    owner = np.empty(n, dtype=np.int64)
    for p in range(nparts):
        owner[order[bounds[p] : bounds[p + 1]]] = p
    return _with_local_index(nparts, owner)


def _with_local_index(nparts: int, owner: np.ndarray) -> PartitionMap:
    local = np.empty(owner.size, dtype=np.int64)
    for p in range(nparts):
        cells = np.nonzero(owner == p)[0]
        local[cells] = np.arange(cells.size)
    return PartitionMap(nparts, owner, local)


def partition_from_owner(owner) -> PartitionMap:
    owner = np.asarray(owner, dtype=np.int64)
    return _with_local_index(int(owner.max()) + 1, owner)


def spanning_edges(grid: CartesianGrid, partition: PartitionMap) -> int:
    po = partition.owner
    return int(np.count_nonzero(po[grid.conn_lo] != po[grid.conn_hi]))


@dataclass(eq=False)
class HaloPlan:
    """Ghost exchange schedule.

    ``recv[(p, q)]`` lists the cells partition ``p`` receives from ``q``;
    ``send[(q, p)]`` is the same list seen from the sender.
    """

    nparts: int
    send: dict = field(default_factory=dict)
    recv: dict = field(default_factory=dict)

    def ghosts(self, part: int) -> np.ndarray:
        lists = [v for (p, _), v in sorted(self.recv.items()) if p == part]
        return np.sort(np.concatenate(lists)) if lists else np.zeros(0, dtype=np.int64)

    def neighbors(self, part: int) -> list[int]:
        return sorted(q for (p, q) in self.recv if p == part)


def adjacency_ghosts(lo, hi, owner, part: int) -> np.ndarray:
    """Off-partition cells adjacent to ``part`` through the connections ``lo``-``hi``."""
    a = (owner[lo] == part) & (owner[hi] != part)
    b = (owner[hi] == part) & (owner[lo] != part)
    return np.unique(np.concatenate([hi[a], lo[b]]))


def build_halo_plan(grid: CartesianGrid, partition: PartitionMap) -> HaloPlan:
    return halo_plan_from_ghosts(
        partition.nparts,
        partition.owner,
        [adjacency_ghosts(grid.conn_lo, grid.conn_hi, partition.owner, p) for p in range(partition.nparts)],
    )


def halo_plan_from_ghosts(nparts: int, owner: np.ndarray, ghosts: list[np.ndarray]) -> HaloPlan:
    plan = HaloPlan(nparts)
    for p in range(nparts):
        g = np.sort(np.asarray(ghosts[p], dtype=np.int64))
        for q in np.unique(owner[g]):
            cells = g[owner[g] == q]
            plan.recv[(p, int(q))] = cells
            plan.send[(int(q), p)] = cells
    return plan


def write_partition_csv(path, partition: PartitionMap) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("cell_index,owner\n")
        for c, o in enumerate(partition.owner):
            fh.write(f"{c},{o}\n")
