"""Global discrete system distributed over a worker team.

The coordinator holds static data and well objects; every worker keeps the
state of its local cells (owned then ghosts) and wells. Workers assemble
their owned rows; ghost values move only through halo exchange and
cross-worker sums only through the team's fixed-order reduction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .ad import Ad
from .assembly import (
    DomainResult,
    LocalState,
    assemble_domain,
    evaluate_masses,
    make_domain_data,
)
from .deck import SimulationDeck
from .equilibrium import hydrostatic_equilibrate
from .grid import build_grid, connection_transmissibilities
from .layout import NVAR, build_layout
from .partition import PartitionMap, hilbert_partition
from .props import PropertyModel, cell_properties
from .runtime import WorkerTeam
from .units import BAR, GRAVITY
from .wells import Well, build_wells, constraint_scale, perforation_rates


@dataclass(eq=False)
class State:
    """Primary unknowns in natural cell order plus well bottom-hole pressures."""

    p: np.ndarray
    s: np.ndarray
    c: np.ndarray
    hist: np.ndarray  # historical maximum adsorption, kg/kg
    pb: np.ndarray

    def copy(self) -> "State":
        return State(self.p.copy(), self.s.copy(), self.c.copy(), self.hist.copy(), self.pb.copy())


@dataclass(eq=False)
class Limits:
    """Per-iteration caps on the Newton update."""

    dp: float = 50.0 * BAR
    ds: float = 0.2
    dc: float = 1.0


@dataclass(eq=False)
class Assembled:
    residual: np.ndarray  # solver order, kg/s and well units
    jacobian: sp.csr_matrix | None
    masses: list  # per worker (n_owned, 3) component masses
    perf_rates: np.ndarray  # (nperf, 3) mass rates into the reservoir, kg/s


def initial_state(deck: SimulationDeck, grid, model: PropertyModel, nwells: int) -> State:
    init = deck.init
    n = grid.ncells
    if init.kind == "EQUIL":
        p, s = hydrostatic_equilibrate(deck, grid, model)
    else:
        p, s = np.full(n, init.pressure), np.full(n, init.sw)
    c = np.full(n, init.cp)
    hist = model.adsorption(c)[0]
    return State(p.astype(float), s.astype(float), c, hist, np.zeros(nwells))


class DiscreteSystem:
    def __init__(
        self,
        deck: SimulationDeck,
        nworkers: int = 1,
        threads: bool = True,
        partition: PartitionMap | None = None,
    ):
        if deck.unit_system != "SI":
            raise ValueError("discrete system expects an SI deck")
        self.deck = deck
        self.grid = grid = build_grid(deck)
        self.model = model = PropertyModel.from_deck(deck)
        rock = deck.rock
        self.tgeo = connection_transmissibilities(grid, rock.permx, rock.permy, rock.permz)
        self.wells: list[Well] = build_wells(deck, grid)
        self.partition = partition or hilbert_partition(grid, nworkers)
        self.layout = layout = build_layout(grid, self.partition, self.wells)
        self.team = WorkerTeam(self.partition.nparts, layout.cell_channels, threads)
        self.data = [make_domain_data(model, grid, self.tgeo, layout, d) for d in layout.domains]
        self.rho_ref = np.array([model.oil.surface_density, model.water.surface_density, model.c_ref])
        self.pv_ref = model.poro_ref * grid.volume
        self.limits = Limits(dc=model.c_ref)

    def close(self) -> None:
        self.team.close()

    @property
    def nworkers(self) -> int:
        return self.team.nworkers

    @property
    def ndof(self) -> int:
        return self.layout.ndof

    def initial_state(self) -> State:
        return initial_state(self.deck, self.grid, self.model, len(self.wells))

    # distribution ---------------------------------------------------------
    def scatter(self, state: State) -> list[LocalState]:
        L = self.layout
        return [
            LocalState(state.p[d.cells].copy(), state.s[d.cells].copy(), state.c[d.cells].copy(),
                       state.hist[d.cells].copy(), state.pb[d.wells].copy())
            for d in L.domains
        ]

    def gather(self, local: list[LocalState]) -> State:
        L = self.layout
        return State(
            L.gather_cells([x.p for x in local]),
            L.gather_cells([x.s for x in local]),
            L.gather_cells([x.c for x in local]),
            L.gather_cells([x.hist for x in local]),
            L.gather_wells([x.pb for x in local]),
        )

    def exchange(self, local: list[LocalState]) -> None:
        """Refresh ghost cells and ghost wells from their owners."""
        for name in ("p", "s", "c", "hist"):
            self.team.halo_exchange([getattr(x, name) for x in local])
        self.team.halo_exchange([x.pb for x in local], self.layout.well_channels)

    # evaluation -----------------------------------------------------------
    def masses(self, local: list[LocalState]) -> list[np.ndarray]:
        L = self.layout
        return self.team.run(
            lambda r, st: evaluate_masses(self.data[r], st, L.domains[r].n_owned), local
        )

    def assemble(self, local, masses_prev, dt: float, jacobian: bool = True) -> Assembled:
        L = self.layout

        def work(r, st, mprev):
            return assemble_domain(L.domains[r], self.data[r], st, mprev, dt, self.wells, jacobian)

        with self.team.timer.section("assembly"):
            results: list[DomainResult] = self.team.run(work, local, masses_prev)
        residual = np.concatenate([res.residual for res in results])
        J = sp.vstack([res.jacobian for res in results], format="csr") if jacobian else None
        return Assembled(residual, J, [res.masses for res in results], self._perf_rates(results))

    def _perf_rates(self, results: list[DomainResult]) -> np.ndarray:
        npf = self.layout.perfs.size
        parts = []
        for dom, res in zip(self.layout.domains, results):
            arr = np.zeros((npf, NVAR))
            arr[dom.perf_ids[res.perf_owned]] = res.perf_rates[res.perf_owned]
            parts.append(arr)
        return self.team.global_reduce(parts)

    def well_rates(self, perf_rates: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-well surface oil and water rates (m^3/s) and polymer rate (kg/s)."""
        nw = len(self.wells)
        w = self.layout.perfs.well
        qo = np.bincount(w, weights=perf_rates[:, 0], minlength=nw) / self.model.oil.surface_density
        qw = np.bincount(w, weights=perf_rates[:, 1], minlength=nw) / self.model.water.surface_density
        qp = np.bincount(w, weights=perf_rates[:, 2], minlength=nw)
        return qo, qw, qp

    # scaling and convergence ---------------------------------------------
    def row_scale(self, dt: float) -> np.ndarray:
        L = self.layout
        out = np.empty(L.ndof)
        for e in range(NVAR):
            out[L.cell_dof + e] = dt / (self.pv_ref * self.rho_ref[e])
        for w, well in enumerate(self.wells):
            out[L.well_dof[w]] = constraint_scale(well, BAR)
        return out

    def component_sums(self, residual: np.ndarray, masses: list) -> tuple[np.ndarray, np.ndarray]:
        """Per-component sums of cell residuals and of masses in place."""
        rs, ms = [], []
        for dom, seg, m in zip(self.layout.domains, self.layout.segments(residual), masses):
            n = dom.n_owned
            rs.append(seg[: NVAR * n].reshape(n, NVAR).sum(axis=0))
            ms.append(m.sum(axis=0))
        return self.team.global_reduce(rs), self.team.global_reduce(ms)

    def balance_error(self, residual: np.ndarray, masses: list, dt: float) -> np.ndarray:
        """``|sum R_e| dt / in-place_e`` per component."""
        r, m = self.component_sums(residual, masses)
        floor = 1e-12 * self.pv_ref.sum() * self.rho_ref
        return np.abs(r) * dt / np.maximum(m, floor)

    # updates ----------------------------------------------------------------
    def update(self, local: list[LocalState], dx: np.ndarray, factor: float = 1.0) -> list[LocalState]:
        """Damped Newton update of owned unknowns followed by a ghost refresh."""
        lim = self.limits
        L = self.layout

        def work(r, st, seg):
            dom = L.domains[r]
            n = dom.n_owned
            out = st.copy()
            d = factor * seg[: NVAR * n].reshape(n, NVAR)
            out.p[:n] += np.clip(d[:, 0], -lim.dp, lim.dp)
            out.s[:n] = np.clip(out.s[:n] + np.clip(d[:, 1], -lim.ds, lim.ds), 0.0, 1.0)
            out.c[:n] = np.maximum(out.c[:n] + np.clip(d[:, 2], -lim.dc, lim.dc), 0.0)
            nw = dom.n_owned_wells
            out.pb[:nw] += np.clip(factor * seg[NVAR * n :], -lim.dp, lim.dp)
            return out

        new = self.team.run(work, local, L.segments(dx))
        self.exchange(new)
        return new

    def advance_history(self, local: list[LocalState]) -> None:
        """Record the maximum adsorption reached after a converged step."""
        for x in local:
            x.hist[:] = np.maximum(x.hist, self.model.adsorption(x.c)[0])

    # wells ---------------------------------------------------------------
    def _perf_props(self, state: State, cells: np.ndarray):
        sub = self.model.subset(cells)
        width = NVAR + 1
        return cell_properties(
            sub,
            Ad.variable(state.p[cells], 0, width),
            Ad.variable(state.s[cells], 1, width),
            Ad.variable(state.c[cells], 2, width),
            state.hist[cells],
        )

    def initialize_bhp(self, state: State, well_ids) -> None:
        """Starting ``P_b`` for the listed wells, consistent with their controls.

        Rate-controlled wells solve their (linear in ``P_b``) rate equation.
        """
        perfs = self.layout.perfs
        for w in well_ids:
            well = self.wells[w]
            idx = np.nonzero(perfs.well == w)[0]
            if idx.size == 0:
                continue
            cells = perfs.cell[idx]
            if not well.is_open:
                state.pb[w] = state.p[cells[0]]
                continue
            c = well.constraint
            if c.kind == "BHP":
                state.pb[w] = c.target
                continue
            cp = self._perf_props(state, cells)
            n = idx.size
            q = perforation_rates(
                self.model, cp, Ad.variable(np.zeros(n), NVAR, NVAR + 1), perfs.wi[idx],
                perfs.depth[idx] - well.ref_depth, np.full(n, well.gamma), np.full(n, well.injector),
                np.full(n, well.inj_conc), np.ones(n, dtype=bool),
            )
            wo = 1.0 if c.kind in ("ORATE", "LRATE") else 0.0
            ww = 1.0 if c.kind in ("WRATE", "LRATE") else 0.0
            q0 = wo * q.oil.val.sum() / self.rho_ref[0] + ww * q.water.val.sum() / self.rho_ref[1]
            dq = wo * q.oil.jac[:, NVAR].sum() / self.rho_ref[0] + ww * q.water.jac[:, NVAR].sum() / self.rho_ref[1]
            if dq > 0.0:
                state.pb[w] = (well.sign * c.target - q0) / dq
            else:
                state.pb[w] = state.p[cells[0]]

    def update_well_gradients(self, state: State, perf_rates: np.ndarray | None) -> None:
        """Recompute each well's mixture unit weight from the given state."""
        perfs = self.layout.perfs
        m = self.model
        for w, well in enumerate(self.wells):
            idx = np.nonzero(perfs.well == w)[0]
            if idx.size == 0:
                continue
            cells = perfs.cell[idx]
            (krw, kro, pc), _ = m.relperm_capillary(state.s[cells])
            rho_o = m.density(state.p[cells], "oil")[0]
            rho_w = m.density(state.p[cells] - pc, "water")[0]
            if perf_rates is not None:
                qo = np.abs(perf_rates[idx, 0]) / rho_o
                qw = np.abs(perf_rates[idx, 1]) / rho_w
            else:
                qo = qw = np.zeros(idx.size)
            if qo.sum() + qw.sum() > 0.0:
                wo, ww = qo, qw
            elif well.injector:
                wo, ww = np.zeros(idx.size), np.ones(idx.size)
            else:
                mu_we = m.todd_longstaff(state.c[cells])[2]
                wo, ww = kro / m.oil.viscosity, krw / mu_we
            tot = wo.sum() + ww.sum()
            if tot <= 0.0:
                well.gamma = GRAVITY * float(rho_w.mean())
            else:
                well.gamma = GRAVITY * float((wo * rho_o + ww * rho_w).sum() / tot)
