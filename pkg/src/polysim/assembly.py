"""Fully implicit residual and analytic Jacobian of the oil/water/polymer system.

Per cell the equations are ordered (oil, water, polymer) and the unknowns
(P_o, S_w, C_p); each well adds its bottom-hole pressure and a control
equation. Residuals are mass rates in kg/s::

    R = (M^{n+1} - M^n) / dt - (inflow through faces) - (well source)

Polymer concentration is measured in kg per m^3 of water at surface
conditions, so polymer mass in solution is ``S_w phi_poly (rho_w/rho_w,sc) C``
and the polymer flux is the water flux divided by ``rho_w,sc`` times the
upstream concentration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import ad
from .ad import Ad
from .layout import NVAR, Layout, LocalDomain
from .props import CellProps, NonPhysicalState, PropertyModel, cell_properties
from .units import GRAVITY
from .wells import Well, constraint_residual, perforation_rates

S_WINDOW = (-0.01, 1.01)


# --------------------------------------------------------------------------
# Face terms
# --------------------------------------------------------------------------


def pv_weights(pv_lo, pv_hi):
    """Pore-volume weights of the two cells of a face."""
    w_lo = pv_lo / (pv_lo + pv_hi)
    return w_lo, 1.0 - w_lo


def phase_potential_difference(p_lo, p_hi, rho_lo, rho_hi, w_lo, w_hi, z_lo, z_hi):
    """``(P_hi - P_lo) - g rho_avg (z_hi - z_lo)``; works on arrays and :class:`Ad`."""
    rho_avg = rho_lo * w_lo + rho_hi * w_hi
    return (p_hi - p_lo) - rho_avg * (GRAVITY * (np.asarray(z_hi) - np.asarray(z_lo)))


def upstream_is_hi(dphi) -> np.ndarray:
    """True where the higher-index cell is upstream (it has the higher potential).

    A zero potential difference selects the higher-index cell, matching the
    ``>=`` in the upstream rule.
    """
    return np.asarray(ad.value(dphi)) >= 0.0


def upstream_cell(lo, hi, dphi):
    return np.where(upstream_is_hi(dphi), hi, lo)


def face_transmissibility(tgeo, kr_up, rho_avg, mu_avg, rk_up=1.0):
    """``T = T_geo kr_up rho_avg / (R_up mu_avg)`` in kg/(Pa s)."""
    return tgeo * kr_up * rho_avg / (rk_up * mu_avg)


@dataclass(eq=False)
class FaceFluxes:
    oil: Ad  # kg/s into the lower-index cell
    water: Ad
    polymer: Ad
    up_oil_hi: np.ndarray
    up_water_hi: np.ndarray


def face_fluxes(model: PropertyModel, cp: CellProps, lo, hi, tgeo, pv, depth) -> FaceFluxes:
    """Inter-cell mass fluxes, differentiated w.r.t. ``(lo vars, hi vars)``."""
    L, H = cp.take(lo, 0, 2 * NVAR), cp.take(hi, NVAR, 2 * NVAR)
    w_lo, w_hi = pv_weights(pv[lo], pv[hi])
    z_lo, z_hi = depth[lo], depth[hi]

    rho_o = L.rho_o * w_lo + H.rho_o * w_hi
    dphi_o = phase_potential_difference(L.p, H.p, L.rho_o, H.rho_o, w_lo, w_hi, z_lo, z_hi)
    up_o = upstream_is_hi(dphi_o)
    kro = ad.where(up_o, H.kro, L.kro)
    f_o = face_transmissibility(tgeo, kro, rho_o, model.oil.viscosity) * dphi_o

    rho_w = L.rho_w * w_lo + H.rho_w * w_hi
    dphi_w = phase_potential_difference(L.pw, H.pw, L.rho_w, H.rho_w, w_lo, w_hi, z_lo, z_hi)
    up_w = upstream_is_hi(dphi_w)
    krw = ad.where(up_w, H.krw, L.krw)
    rk = ad.where(up_w, H.rk, L.rk)
    c_up = ad.where(up_w, H.c, L.c)
    mu_we = L.mu_we * w_lo + H.mu_we * w_hi
    mu_pe = L.mu_pe * w_lo + H.mu_pe * w_hi
    drive = krw / rk * rho_w * dphi_w * tgeo
    f_w = drive / mu_we
    f_p = drive / mu_pe * c_up * (1.0 / model.water.surface_density)
    return FaceFluxes(f_o, f_w, f_p, up_o, up_w)


def accumulation(model: PropertyModel, cp: CellProps, volume) -> tuple[Ad, Ad, Ad]:
    """Component masses in a cell (kg): oil, water, polymer (solution + adsorbed)."""
    v = np.asarray(volume)
    m_o = cp.phi * (1.0 - cp.s) * cp.rho_o * v
    water = cp.phi * cp.s * cp.rho_w
    m_w = water * v
    phi_poly = model.polymer_porosity(cp.phi)
    m_p = (phi_poly * cp.s * cp.rho_w * cp.c * (1.0 / model.water.surface_density)
           + (1.0 - cp.phi) * cp.ads * (model.rock_density)) * v
    return m_o, m_w, m_p


def check_physical(cp: CellProps, n: int | None = None) -> None:
    s = cp.s.val[:n]
    phi = cp.phi.val[:n]
    if np.any(s < S_WINDOW[0]) or np.any(s > S_WINDOW[1]):
        raise NonPhysicalState("water saturation outside the admissible window")
    if np.any(phi <= 0.0) or np.any(phi >= 1.0):
        raise NonPhysicalState("porosity outside (0,1)")
    if np.any(~np.isfinite(cp.p.val[:n])):
        raise NonPhysicalState("non-finite pressure")


# --------------------------------------------------------------------------
# Per-domain assembly
# --------------------------------------------------------------------------


@dataclass(eq=False)
class LocalState:
    """Primary unknowns of one worker's local cells (owned then ghosts) and wells."""

    p: np.ndarray
    s: np.ndarray
    c: np.ndarray
    hist: np.ndarray  # historical max adsorption, kg/kg
    pb: np.ndarray

    def copy(self) -> "LocalState":
        return LocalState(self.p.copy(), self.s.copy(), self.c.copy(), self.hist.copy(), self.pb.copy())


class JacobianPattern:
    """Fixed CSR pattern of one worker's owned rows and a scatter map for values.

    Contributions are produced by :func:`assemble_domain` in a fixed order;
    ``inverse`` maps each contribution to its CSR slot, and duplicate slots
    are summed in contribution order, which keeps results deterministic.
    """

    def __init__(self, dom: LocalDomain, ndof: int):
        n = dom.n_owned
        cd = dom.cell_dof
        wd = dom.well_dof
        rows, cols = [], []
        e = np.arange(NVAR)

        own = np.arange(n)
        rows.append(np.repeat((NVAR * own[:, None] + e[None, :]).ravel(), NVAR))
        cols.append(np.tile(cd[own][:, None] + e[None, :], (1, NVAR)).ravel())

        lo, hi = dom.conn_lo, dom.conn_hi
        fcols = np.concatenate([cd[lo][:, None] + e[None, :], cd[hi][:, None] + e[None, :]], axis=1)  # (m,6)
        for cell, mask in ((lo, lo < n), (hi, hi < n)):
            r = NVAR * cell[mask][:, None] + e[None, :]  # (k,3)
            rows.append(np.repeat(r[:, :, None], 2 * NVAR, axis=2).ravel())
            cols.append(np.repeat(fcols[mask][:, None, :], NVAR, axis=1).ravel())

        pc, pw = dom.perf_cell, dom.perf_well
        pcols = np.concatenate([cd[pc][:, None] + e[None, :], wd[pw][:, None]], axis=1)  # (np,4)
        cmask = pc < n
        r = NVAR * pc[cmask][:, None] + e[None, :]
        rows.append(np.repeat(r[:, :, None], NVAR + 1, axis=2).ravel())
        cols.append(np.repeat(pcols[cmask][:, None, :], NVAR, axis=1).ravel())

        wmask = pw < dom.n_owned_wells
        rows.append(np.repeat(NVAR * n + pw[wmask], NVAR + 1))
        cols.append(pcols[wmask].ravel())
        ow = np.arange(dom.n_owned_wells)
        rows.append(NVAR * n + ow)
        cols.append(wd[ow])

        self.face_masks = (lo < n, hi < n)
        self.perf_cell_mask = cmask
        self.perf_well_mask = wmask
        rows = np.concatenate(rows).astype(np.int64)
        cols = np.concatenate(cols).astype(np.int64)
        key = rows * ndof + cols
        uniq, inverse = np.unique(key, return_inverse=True)
        self.inverse = inverse.astype(np.int64)
        self.nnz = uniq.size
        urow = uniq // ndof
        self.indices = (uniq % ndof).astype(np.int64)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(urow, minlength=dom.size))]).astype(np.int64)
        self.shape = (dom.size, ndof)
        self.ncontrib = rows.size

    def matrix(self, contributions: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.inverse, weights=contributions, minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


@dataclass(eq=False)
class DomainData:
    """Static per-worker data needed by the assembly."""

    model: PropertyModel  # per-cell data restricted to local cells
    volume: np.ndarray
    depth: np.ndarray
    pv_ref: np.ndarray
    tgeo: np.ndarray
    perf_wi: np.ndarray
    perf_depth: np.ndarray
    pattern: JacobianPattern | None = None


def make_domain_data(model: PropertyModel, grid, tgeo, layout: Layout, dom: LocalDomain, with_pattern=True):
    sub = model.subset(dom.cells)
    vol = grid.volume[dom.cells]
    return DomainData(
        model=sub,
        volume=vol,
        depth=grid.depth[dom.cells],
        pv_ref=sub.poro_ref * vol,
        tgeo=tgeo[dom.conn_ids],
        perf_wi=layout.perfs.wi[dom.perf_ids],
        perf_depth=layout.perfs.depth[dom.perf_ids],
        pattern=JacobianPattern(dom, layout.ndof) if with_pattern else None,
    )


@dataclass(eq=False)
class DomainResult:
    residual: np.ndarray  # owned rows, segment order
    jacobian: sp.csr_matrix | None
    masses: np.ndarray  # (n_owned, 3) component masses at the evaluated state
    perf_rates: np.ndarray  # (nperf_local, 3) mass rates oil/water/polymer
    perf_owned: np.ndarray  # local perforations whose cell is owned


def evaluate_masses(data: DomainData, st: LocalState, n: int) -> np.ndarray:
    idx = np.arange(n)
    cp = _cell_props(data, st, idx)
    m = accumulation(data.model, cp, data.volume[idx])
    return np.stack([x.val for x in m], axis=1)


def _cell_props(data: DomainData, st: LocalState, idx=None) -> CellProps:
    if idx is None:
        idx = slice(None)
    p = Ad.variable(st.p[idx], 0, NVAR)
    s = Ad.variable(st.s[idx], 1, NVAR)
    c = Ad.variable(st.c[idx], 2, NVAR)
    return cell_properties(data.model, p, s, c, st.hist[idx], data.model.poro_ref[idx])


def well_arrays(dom: LocalDomain, wells: list[Well]):
    """Per-local-perforation copies of well data."""
    gw = dom.wells[dom.perf_well]
    gamma = np.array([wells[w].gamma for w in gw])
    inj = np.array([wells[w].injector for w in gw], dtype=bool)
    conc = np.array([wells[w].inj_conc for w in gw])
    is_open = np.array([wells[w].is_open for w in gw], dtype=bool)
    ref = np.array([wells[w].ref_depth for w in gw])
    return gamma, inj, conc, is_open, ref


def assemble_domain(
    dom: LocalDomain,
    data: DomainData,
    st: LocalState,
    masses_prev: np.ndarray,
    dt: float,
    wells: list[Well],
    jacobian: bool = True,
) -> DomainResult:
    model = data.model
    n = dom.n_owned
    cp = _cell_props(data, st)
    check_physical(cp, n)

    # accumulation
    m_o, m_w, m_p = accumulation(model, _first(cp, n), data.volume[:n])
    masses = np.stack([m_o.val, m_w.val, m_p.val], axis=1)
    res_cell = (masses - masses_prev) / dt
    acc_jac = np.stack([m_o.jac, m_w.jac, m_p.jac], axis=1) / dt  # (n,3,3)

    # faces
    ff = face_fluxes(model, cp, dom.conn_lo, dom.conn_hi, data.tgeo, data.pv_ref, data.depth)
    fval = np.stack([ff.oil.val, ff.water.val, ff.polymer.val], axis=1)  # (m,3)
    fjac = np.stack([ff.oil.jac, ff.water.jac, ff.polymer.jac], axis=1)  # (m,3,6)
    lo, hi = dom.conn_lo, dom.conn_hi
    mlo, mhi = lo < n, hi < n
    for e in range(NVAR):
        res_cell[:, e] -= np.bincount(lo[mlo], weights=fval[mlo, e], minlength=n)
        res_cell[:, e] += np.bincount(hi[mhi], weights=fval[mhi, e], minlength=n)

    # perforations
    gamma, inj, conc, is_open, ref = well_arrays(dom, wells)
    pc = dom.perf_cell
    npf = pc.size
    if npf:
        pcp = cp.take(pc, 0, NVAR + 1)
        pb = Ad.variable(st.pb[dom.perf_well], NVAR, NVAR + 1)
        q = perforation_rates(model, pcp, pb, data.perf_wi, data.perf_depth - ref, gamma, inj, conc, is_open)
        qval = np.stack([q.oil.val, q.water.val, q.polymer.val], axis=1)
        qjac = np.stack([q.oil.jac, q.water.jac, q.polymer.jac], axis=1)  # (np,3,4)
    else:
        qval = np.zeros((0, NVAR))
        qjac = np.zeros((0, NVAR, NVAR + 1))
    cmask = pc < n
    for e in range(NVAR):
        res_cell[:, e] -= np.bincount(pc[cmask], weights=qval[cmask, e], minlength=n)

    # well control equations
    nw = dom.n_owned_wells
    res_well = np.zeros(nw)
    wjac_perf = np.zeros((npf, NVAR + 1))
    wdiag = np.zeros(nw)
    rho_sc_o = model.oil.surface_density
    rho_sc_w = model.water.surface_density
    for lw in range(nw):
        well = wells[dom.wells[lw]]
        idx = np.nonzero(dom.perf_well == lw)[0]
        pb_w = Ad.variable([st.pb[lw]], 0, 1)
        if idx.size == 0:
            res_well[lw] = 0.0
            wdiag[lw] = 1.0
            continue
        if not well.is_open:
            first = idx[0]
            res_well[lw] = st.pb[lw] - st.p[pc[first]]
            wjac_perf[first, 0] = -1.0
            wdiag[lw] = 1.0
            continue
        if well.constraint.kind == "BHP":
            r = constraint_residual(well, pb_w, None, None, None)
            res_well[lw] = r.val[0]
            wdiag[lw] = 1.0
            continue
        qo = Ad(qval[idx, 0] / rho_sc_o, qjac[idx, 0] / rho_sc_o)
        qw = Ad(qval[idx, 1] / rho_sc_w, qjac[idx, 1] / rho_sc_w)
        qo_sum = Ad([qo.val.sum()], np.zeros((1, 1)))
        qw_sum = Ad([qw.val.sum()], np.zeros((1, 1)))
        r = constraint_residual(well, pb_w, qo_sum, qw_sum, None)
        res_well[lw] = r.val[0]
        kind = well.constraint.kind
        wo = 1.0 if kind in ("ORATE", "LRATE") else 0.0
        ww = 1.0 if kind in ("WRATE", "LRATE") else 0.0
        wjac_perf[idx] = wo * qo.jac + ww * qw.jac

    residual = np.concatenate([res_cell.ravel(), res_well])
    jac = None
    if jacobian:
        pat = data.pattern
        fm_lo, fm_hi = pat.face_masks
        parts = [
            acc_jac.ravel(),
            -fjac[fm_lo].ravel(),
            fjac[fm_hi].ravel(),
            -qjac[pat.perf_cell_mask].ravel(),
            wjac_perf[pat.perf_well_mask].ravel(),
            wdiag,
        ]
        jac = pat.matrix(np.concatenate(parts))
    return DomainResult(residual, jac, masses, qval, cmask)


def _first(cp: CellProps, n: int) -> CellProps:
    return CellProps(**{k: getattr(cp, k)[:n] for k in cp.__dataclass_fields__})
