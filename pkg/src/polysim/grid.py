"""Cartesian grid geometry and face connections."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .deck import SimulationDeck

DIRECTIONS = ("x", "y", "z")


@dataclass(eq=False)
class CartesianGrid:
    nx: int
    ny: int
    nz: int
    dx: np.ndarray
    dy: np.ndarray
    dz: np.ndarray
    depth: np.ndarray  # cell-center depth, positive down
    volume: np.ndarray
    # face connections, ordered by direction then by lower cell index
    conn_lo: np.ndarray
    conn_hi: np.ndarray
    conn_dir: np.ndarray  # 0, 1, 2 for x, y, z

    @property
    def ncells(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def nconn(self) -> int:
        return self.conn_lo.size

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.nx, self.ny, self.nz

    def index(self, i, j, k):
        """Natural index of zero-based ``(i, j, k)``."""
        return i + self.nx * (j + self.ny * k)

    def ijk(self, cell):
        cell = np.asarray(cell)
        i = cell % self.nx
        j = (cell // self.nx) % self.ny
        k = cell // (self.nx * self.ny)
        return i, j, k

    def cell_length(self, direction: int) -> np.ndarray:
        return (self.dx, self.dy, self.dz)[direction]

    def face_area(self, direction: int) -> np.ndarray:
        """Per-cell area of the faces normal to ``direction``."""
        if direction == 0:
            return self.dy * self.dz
        if direction == 1:
            return self.dx * self.dz
        return self.dx * self.dy


def build_grid(deck: SimulationDeck) -> CartesianGrid:
    g = deck.grid
    nx, ny, nz = g.nx, g.ny, g.nz
    dz3 = g.dz.reshape(nz, ny, nx)
    above = np.cumsum(dz3, axis=0) - dz3
    depth = g.tops.reshape(1, ny, nx) + above + 0.5 * dz3
    lo, hi, dr = connections(nx, ny, nz)
    return CartesianGrid(
        nx, ny, nz, g.dx.copy(), g.dy.copy(), g.dz.copy(), depth.ravel(), g.dx * g.dy * g.dz, lo, hi, dr
    )


def connections(nx: int, ny: int, nz: int):
    """Enumerate interior faces of an ``nx*ny*nz`` grid as ``(lo, hi, direction)``."""
    idx = np.arange(nx * ny * nz).reshape(nz, ny, nx)
    los, his, dirs = [], [], []
    for d, (a, b) in enumerate(
        ((idx[:, :, :-1], idx[:, :, 1:]), (idx[:, :-1, :], idx[:, 1:, :]), (idx[:-1], idx[1:]))
    ):
        lo = a.ravel()
        order = np.argsort(lo, kind="stable")
        los.append(lo[order])
        his.append(b.ravel()[order])
        dirs.append(np.full(lo.size, d, dtype=np.int8))
    return np.concatenate(los), np.concatenate(his), np.concatenate(dirs)


def half_transmissibility(length, area, perm):
    """``2 k A / dd`` for one side of a face."""
    return 2.0 * perm * area / length


def geometric_transmissibility(grid: CartesianGrid, cell_a, cell_b, direction: int, perm) -> np.ndarray:
    """Harmonic combination of the two half-cell terms across a face, in m^3.

    ``perm`` is the per-cell permeability along ``direction``. A face with
    zero permeability on either side is sealed.
    """
    L = grid.cell_length(direction)
    A = grid.face_area(direction)
    ta = half_transmissibility(L[cell_a], A[cell_a], perm[cell_a])
    tb = half_transmissibility(L[cell_b], A[cell_b], perm[cell_b])
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ta * tb / (ta + tb)
    return np.where((ta > 0) & (tb > 0), t, 0.0)


def connection_transmissibilities(grid: CartesianGrid, permx, permy, permz) -> np.ndarray:
    tgeo = np.empty(grid.nconn)
    for d, perm in enumerate((permx, permy, permz)):
        m = grid.conn_dir == d
        tgeo[m] = geometric_transmissibility(grid, grid.conn_lo[m], grid.conn_hi[m], d, perm)
    return tgeo
