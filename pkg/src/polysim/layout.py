"""Distributed layout: per-worker local domains and the solver unknown ordering.

Solver ordering is partition-major: worker ``r`` owns the contiguous range
``offsets[r]:offsets[r+1]`` holding its owned cells (3 unknowns each,
ascending natural index) followed by the wells it owns. A well is owned by
the lowest partition among its perforated cells; that partition ghosts all
perforated cells, and every partition with a perforated cell ghosts the
well's bottom-hole pressure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import CartesianGrid
from .partition import PartitionMap, adjacency_ghosts, halo_plan_from_ghosts, HaloPlan
from .runtime import ExchangeChannel

NVAR = 3


@dataclass(eq=False)
class PerforationTable:
    """All perforations flattened, ordered by well then depth."""

    cell: np.ndarray
    well: np.ndarray
    wi: np.ndarray
    depth: np.ndarray

    @classmethod
    def from_wells(cls, wells) -> "PerforationTable":
        cell, well, wi, depth = [], [], [], []
        for w, wl in enumerate(wells):
            for p in wl.perforations:
                cell.append(p.cell)
                well.append(w)
                wi.append(p.wi)
                depth.append(p.depth)
        return cls(
            np.array(cell, dtype=np.int64),
            np.array(well, dtype=np.int64),
            np.array(wi, dtype=float),
            np.array(depth, dtype=float),
        )

    @property
    def size(self) -> int:
        return self.cell.size


@dataclass(eq=False)
class LocalDomain:
    rank: int
    cells: np.ndarray  # global ids, owned then ghosts
    n_owned: int
    conn_ids: np.ndarray  # global connection ids with an owned endpoint, ascending
    conn_lo: np.ndarray  # local indices
    conn_hi: np.ndarray
    wells: np.ndarray  # global well ids, owned then ghosts
    n_owned_wells: int
    perf_ids: np.ndarray  # global perforation ids, ascending
    perf_cell: np.ndarray  # local cell index
    perf_well: np.ndarray  # local well index
    cell_dof: np.ndarray  # first solver unknown of every local cell
    well_dof: np.ndarray  # solver unknown of every local well
    offset: int  # start of the owned solver range
    size: int  # number of owned solver unknowns

    @property
    def owned_cells(self) -> np.ndarray:
        return self.cells[: self.n_owned]

    @property
    def owned_wells(self) -> np.ndarray:
        return self.wells[: self.n_owned_wells]


@dataclass(eq=False)
class Layout:
    ncells: int
    nwells: int
    partition: PartitionMap
    domains: list[LocalDomain]
    offsets: np.ndarray
    well_owner: np.ndarray
    cell_dof: np.ndarray  # global: first solver unknown of each natural cell
    well_dof: np.ndarray  # global: solver unknown of each well
    cell_plan: HaloPlan
    cell_channels: list[ExchangeChannel]
    well_channels: list[ExchangeChannel]
    perfs: PerforationTable

    @property
    def nparts(self) -> int:
        return self.partition.nparts

    @property
    def ndof(self) -> int:
        return int(self.offsets[-1])

    def natural_permutation(self) -> np.ndarray:
        """``perm`` with ``x_natural = x_solver[perm]`` (cells 3 per cell, then wells)."""
        cell = (self.cell_dof[:, None] + np.arange(NVAR)[None, :]).ravel()
        return np.concatenate([cell, self.well_dof]).astype(np.int64)

    # state scatter/gather -------------------------------------------------
    def scatter_cells(self, values: np.ndarray) -> list[np.ndarray]:
        return [np.array(values[d.cells]) for d in self.domains]

    def gather_cells(self, local: list[np.ndarray]) -> np.ndarray:
        out = np.empty((self.ncells,) + local[0].shape[1:], dtype=local[0].dtype)
        for d, arr in zip(self.domains, local):
            out[d.owned_cells] = arr[: d.n_owned]
        return out

    def scatter_wells(self, values: np.ndarray) -> list[np.ndarray]:
        return [np.array(values[d.wells]) for d in self.domains]

    def gather_wells(self, local: list[np.ndarray]) -> np.ndarray:
        out = np.zeros(self.nwells)
        for d, arr in zip(self.domains, local):
            out[d.owned_wells] = arr[: d.n_owned_wells]
        return out

    def segments(self, x: np.ndarray) -> list[np.ndarray]:
        return [x[self.offsets[r] : self.offsets[r + 1]] for r in range(self.nparts)]


def well_owners(perfs: PerforationTable, owner: np.ndarray, nwells: int) -> np.ndarray:
    out = np.zeros(nwells, dtype=np.int64)
    for w in range(nwells):
        cells = perfs.cell[perfs.well == w]
        out[w] = owner[cells].min() if cells.size else 0
    return out


def build_layout(grid: CartesianGrid, partition: PartitionMap, wells) -> Layout:
    owner = partition.owner
    nparts = partition.nparts
    perfs = PerforationTable.from_wells(wells)
    nwells = len(wells)
    wown = well_owners(perfs, owner, nwells)

    owned_cells = [partition.owned(p) for p in range(nparts)]
    owned_wells = [np.nonzero(wown == p)[0] for p in range(nparts)]

    # solver ordering
    sizes = np.array([NVAR * owned_cells[p].size + owned_wells[p].size for p in range(nparts)])
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    cell_dof = np.empty(grid.ncells, dtype=np.int64)
    well_dof = np.empty(nwells, dtype=np.int64)
    for p in range(nparts):
        cell_dof[owned_cells[p]] = offsets[p] + NVAR * np.arange(owned_cells[p].size)
        well_dof[owned_wells[p]] = offsets[p] + NVAR * owned_cells[p].size + np.arange(owned_wells[p].size)

    ghosts = []
    ghost_wells = []
    for p in range(nparts):
        g = adjacency_ghosts(grid.conn_lo, grid.conn_hi, owner, p)
        mine = np.isin(perfs.well, owned_wells[p])
        extra = perfs.cell[mine]
        extra = extra[owner[extra] != p]
        ghosts.append(np.union1d(g, extra).astype(np.int64))
        touching = np.unique(perfs.well[owner[perfs.cell] == p])
        ghost_wells.append(np.setdiff1d(touching, owned_wells[p]).astype(np.int64))
    plan = halo_plan_from_ghosts(nparts, owner, ghosts)

    domains = []
    for p in range(nparts):
        cells = np.concatenate([owned_cells[p], ghosts[p]]).astype(np.int64)
        n_owned = owned_cells[p].size
        has = (owner[grid.conn_lo] == p) | (owner[grid.conn_hi] == p)
        cids = np.nonzero(has)[0]
        lookup = np.full(grid.ncells, -1, dtype=np.int64)
        lookup[cells] = np.arange(cells.size)
        lo = lookup[grid.conn_lo[cids]]
        hi = lookup[grid.conn_hi[cids]]
        assert (lo >= 0).all() and (hi >= 0).all()
        wl = np.concatenate([owned_wells[p], ghost_wells[p]]).astype(np.int64)
        wlookup = np.full(nwells, -1, dtype=np.int64)
        wlookup[wl] = np.arange(wl.size)
        pmask = (owner[perfs.cell] == p) | np.isin(perfs.well, owned_wells[p])
        pids = np.nonzero(pmask)[0]
        domains.append(
            LocalDomain(
                rank=p,
                cells=cells,
                n_owned=n_owned,
                conn_ids=cids,
                conn_lo=lo,
                conn_hi=hi,
                wells=wl,
                n_owned_wells=owned_wells[p].size,
                perf_ids=pids,
                perf_cell=lookup[perfs.cell[pids]],
                perf_well=wlookup[perfs.well[pids]],
                cell_dof=cell_dof[cells],
                well_dof=well_dof[wl],
                offset=int(offsets[p]),
                size=int(sizes[p]),
            )
        )

    cell_channels = []
    for (p, q), cells in sorted(plan.recv.items()):
        dst = domains[p]
        src = domains[q]
        cell_channels.append(
            ExchangeChannel(q, p, _positions(src.cells, cells), _positions(dst.cells, cells))
        )
    well_channels = []
    for p in range(nparts):
        d = domains[p]
        for w in d.wells[d.n_owned_wells :]:
            q = int(wown[w])
            well_channels.append(
                ExchangeChannel(q, p, _positions(domains[q].wells, [w]), _positions(d.wells, [w]))
            )
    return Layout(
        ncells=grid.ncells,
        nwells=nwells,
        partition=partition,
        domains=domains,
        offsets=offsets,
        well_owner=wown,
        cell_dof=cell_dof,
        well_dof=well_dof,
        cell_plan=plan,
        cell_channels=cell_channels,
        well_channels=well_channels,
        perfs=perfs,
    )


def _positions(arr: np.ndarray, values) -> np.ndarray:
    """Indices of ``values`` inside ``arr`` (all must be present)."""
    order = np.argsort(arr, kind="stable")
    pos = np.searchsorted(arr, values, sorter=order)
    return order[pos].astype(np.int64)
