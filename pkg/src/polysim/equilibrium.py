"""Hydrostatic initialization by marching phase pressures through depth."""

from __future__ import annotations

import math
import warnings

import numpy as np

from .deck import SimulationDeck
from .grid import CartesianGrid
from .props import PropertyModel
from .units import GRAVITY


def march_pressure(p0: float, z0: float, targets, density, h: float) -> np.ndarray:
    """Integrate ``dP/dz = g rho(P)`` from ``(z0, p0)`` to every target depth.

    Second-order Runge-Kutta (Heun) with steps no longer than ``h`` that land
    exactly on each target. ``density`` maps pressure to density.
    """
    targets = np.asarray(targets, dtype=float)
    out = np.empty(targets.size)
    if h <= 0:
        raise ValueError("step length must be positive")

    def rhs(p):
        return GRAVITY * float(density(p))

    for direction in (1.0, -1.0):
        sel = np.nonzero((targets - z0) * direction >= 0.0)[0] if direction > 0 else np.nonzero(targets < z0)[0]
        order = sel[np.argsort(direction * targets[sel], kind="stable")]
        z, p = z0, p0
        for i in order:
            zt = targets[i]
            span = zt - z
            nsteps = max(int(math.ceil(abs(span) / h - 1e-12)), 1) if span != 0.0 else 0
            dz = span / nsteps if nsteps else 0.0
            for _ in range(nsteps):
                k1 = rhs(p)
                k2 = rhs(p + dz * k1)
                p = p + 0.5 * dz * (k1 + k2)
            z = zt
            out[i] = p
    return out


def connate_saturation(model: PropertyModel) -> float:
    """Largest tabulated ``S_w`` at which water is still immobile."""
    immobile = np.nonzero(model.swof.y[:, 0] <= 0.0)[0]
    if immobile.size == 0 or immobile[0] != 0:
        return float(model.swof.x[0])
    run = immobile[np.cumsum(np.diff(np.concatenate([[-1], immobile])) != 1) == 0]
    return float(model.swof.x[run[-1]])


def invert_capillary(model: PropertyModel, pc_target: np.ndarray, below_contact: np.ndarray) -> np.ndarray:
    """Water saturation whose capillary pressure equals ``pc_target``.

    A table with constant ``P_c`` cannot be inverted; then cells above the
    contact hold connate water and cells below are fully water saturated.
    """
    sw_tab = model.swof.x
    pc_tab = model.swof.y[:, 2]
    if np.ptp(pc_tab) == 0.0:
        return np.where(below_contact, 1.0, connate_saturation(model))
    # P_c decreases with S_w; interpolate on the reversed table
    rev_pc = pc_tab[::-1]
    rev_sw = sw_tab[::-1]
    return np.interp(pc_target, rev_pc, rev_sw)


def hydrostatic_equilibrate(deck: SimulationDeck, grid: CartesianGrid, model: PropertyModel | None = None):
    """Initial ``(P_o, S_w)`` in capillary-gravity equilibrium (SI deck).

    The phase present at the datum is marched from the datum pressure; the
    other phase starts at the contact, offset by the contact capillary
    pressure. Below the contact ``P_o = P_w + P_c(S_w)``.
    """
    init = deck.init
    model = model or PropertyModel.from_deck(deck)
    depth = grid.depth
    top = float((depth - 0.5 * grid.dz).min())
    bottom = float((depth + 0.5 * grid.dz).max())
    owc = init.owc_depth
    if owc < top or owc > bottom:
        warnings.warn("oil-water contact outside the reservoir: single-phase column", RuntimeWarning, stacklevel=2)
    h = float(grid.dz.min()) / 4.0

    def rho_o(p):
        return model.density(p, "oil")[0]

    def rho_w(p):
        return model.density(p, "water")[0]

    zs, inv = np.unique(depth, return_inverse=True)
    targets = np.append(zs, owc)
    if init.datum_depth <= owc:
        po_all = march_pressure(init.pressure, init.datum_depth, targets, rho_o, h)
        pw_owc = po_all[-1] - init.pc_owc
        pw_all = march_pressure(pw_owc, owc, zs, rho_w, h)
        po_z = po_all[:-1]
    else:
        pw_all = march_pressure(init.pressure, init.datum_depth, targets, rho_w, h)
        po_owc = pw_all[-1] + init.pc_owc
        po_z = march_pressure(po_owc, owc, zs, rho_o, h)
        pw_all = pw_all[:-1]
    pw_z = pw_all
    below = zs > owc
    sw_z = invert_capillary(model, po_z - pw_z, below)
    pc_z = model.relperm_capillary(sw_z)[0][2]
    po_z = np.where(below, pw_z + pc_z, po_z)
    return po_z[inv], sw_z[inv]
