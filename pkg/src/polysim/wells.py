"""Peaceman well model: well index, perforation rates and control equations.

Sign convention: rates are positive into the reservoir. Rate targets are
stored as non-negative magnitudes and signed by the well type.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import ad
from .ad import Ad
from .deck import Action, SimulationDeck
from .grid import CartesianGrid
from .units import GRAVITY

RATE_CONTROLS = ("WRATE", "ORATE", "LRATE")
MAX_SWITCH_CYCLES = 3


class WellConfigurationError(ValueError):
    pass


def equivalent_radius_ka(kx, ky, kz, hx, hy, hz, direction: str, gf: float = 0.249):
    """Peaceman equivalent radius ``r_e`` and effective permeability ``k_a``.

    The two permeabilities and cell sizes transverse to the well axis enter
    symmetrically; e.g. for an x-direction well they are the y and z values.
    """
    if direction == "X":
        ka_, kb_, ha, hb = ky, kz, hy, hz
    elif direction == "Y":
        ka_, kb_, ha, hb = kz, kx, hz, hx
    else:
        ka_, kb_, ha, hb = kx, ky, hx, hy
    if ka_ <= 0 or kb_ <= 0:
        raise WellConfigurationError("transverse permeability must be positive at a perforation")
    r1 = math.sqrt(kb_ / ka_)
    r2 = math.sqrt(ka_ / kb_)
    re = (2.0 * gf / math.sqrt(math.pi)) * math.sqrt(r1 * ha**2 + r2 * hb**2) / (r1**0.5 + r2**0.5)
    return re, math.sqrt(ka_ * kb_)


def well_index(re: float, ka: float, rw: float, skin: float, h: float, f: float = 1.0, fh: float = 1.0) -> float:
    """``WI = 2 pi f h f_h k_a / (ln(r_e / r_w) + s)`` in m^3."""
    denom = math.log(re / rw) + skin
    if denom <= 0:
        raise WellConfigurationError("ln(r_e/r_w) + skin must be positive")
    return 2.0 * math.pi * f * h * fh * ka / denom


def perforation_pressure(pb, gamma, z_m, z_b):
    """Wellbore pressure opposite a perforation at depth ``z_m``."""
    return pb + gamma * (np.asarray(z_m) - z_b)


@dataclass(eq=False)
class Perforation:
    cell: int
    direction: str
    f: float
    fh: float
    gf: float
    wi: float
    depth: float


@dataclass(eq=False)
class WellConstraint:
    kind: str  # BHP, WRATE, ORATE, LRATE
    target: float  # Pa for BHP, non-negative surface m^3/s for rates
    bound: float | None = None  # BHP cap (injector) or floor (producer)


@dataclass(eq=False)
class Well:
    name: str
    kind: str  # INJ or PROD
    rw: float
    skin: float
    ref_depth: float
    perforations: list[Perforation]
    constraint: WellConstraint
    is_open: bool = True
    inj_conc: float = 0.0
    gamma: float = 0.0
    rate_constraint: WellConstraint | None = None  # deck rate control while temporarily on BHP
    switches: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def injector(self) -> bool:
        return self.kind == "INJ"

    @property
    def sign(self) -> float:
        return 1.0 if self.injector else -1.0


def build_wells(deck: SimulationDeck, grid: CartesianGrid) -> list[Well]:
    """Wells with perforations sorted by depth and well indices computed (SI deck)."""
    rock = deck.rock
    wells = []
    for spec in deck.wells:
        perfs = []
        for p in spec.perforations:
            c = int(grid.index(p.i - 1, p.j - 1, p.k - 1))
            hx, hy, hz = grid.dx[c], grid.dy[c], grid.dz[c]
            re, ka = equivalent_radius_ka(
                rock.permx[c], rock.permy[c], rock.permz[c], hx, hy, hz, p.direction, p.gf
            )
            h = {"X": hx, "Y": hy, "Z": hz}[p.direction]
            skin = spec.skin if p.skin is None else p.skin
            wi = well_index(re, ka, spec.rw, skin, h, p.f, p.fh)
            perfs.append(Perforation(c, p.direction, p.f, p.fh, p.gf, wi, float(grid.depth[c])))
        perfs.sort(key=lambda q: (q.depth, q.cell))
        ref = spec.ref_depth if spec.ref_depth is not None else (perfs[0].depth if perfs else 0.0)
        default = WellConstraint("BHP", 0.0)
        wells.append(Well(spec.name, spec.kind, spec.rw, spec.skin, ref, perfs, default, is_open=False))
    return wells


def apply_action(well: Well, action: Action) -> None:
    """Apply one schedule action (SI deck values) to ``well``."""
    if action.kind == "OPEN":
        well.is_open = True
    elif action.kind == "SHUT":
        well.is_open = False
    elif action.kind == "POLYMER":
        well.inj_conc = action.conc
    elif action.kind == "CONTROL":
        well.constraint = WellConstraint(action.control, action.value, action.bound)
        well.rate_constraint = None
        well.switches = 0
        well.is_open = True
        if action.conc is not None:
            well.inj_conc = action.conc


# --------------------------------------------------------------------------
# Perforation rates
# --------------------------------------------------------------------------


@dataclass(eq=False)
class PerforationRates:
    """Mass rates into the reservoir (kg/s) per perforation, as :class:`Ad` objects."""

    oil: Ad
    water: Ad
    polymer: Ad


def perforation_rates(model, cells, pb: Ad, wi, dz, gamma, injector, inj_conc, is_open) -> PerforationRates:
    """Rates of a batch of perforations.

    ``cells`` is a :class:`polysim.props.CellProps` evaluated at the
    perforated cells with the same derivative layout as ``pb``. ``dz`` is
    ``z_m - z_b``; ``gamma``, ``injector``, ``inj_conc`` and ``is_open`` are
    per-perforation copies of the owning well's data.
    """
    pbm = pb + np.asarray(gamma) * np.asarray(dz)
    injector = np.asarray(injector, dtype=bool)
    wi = np.asarray(wi) * np.asarray(is_open, dtype=float)
    draw_o = pbm - cells.p
    draw_w = pbm - cells.pw
    # producer: phase mobilities of the cell
    lam_o = cells.kro / model.oil.viscosity
    lam_w = cells.krw / (cells.rk * cells.mu_we)
    # injector: total mobility with the injected solution viscosity
    _, _, mu_inj, _ = model.todd_longstaff(np.asarray(inj_conc, dtype=float))
    lam_t = (cells.krw + cells.kro) / mu_inj
    q_o_prod = wi * (lam_o * cells.rho_o * draw_o)
    q_w_prod = wi * (lam_w * cells.rho_w * draw_w)
    q_w_inj = wi * (lam_t * cells.rho_w * draw_w)
    zero = Ad.constant(np.zeros(len(pb)), pb.width)
    q_o = ad.where(injector, zero, q_o_prod)
    q_w = ad.where(injector, q_w_inj, q_w_prod)
    inflow = injector & (q_w.val > 0.0)
    c_inj = np.broadcast_to(np.asarray(inj_conc, dtype=float), pb.val.shape)
    conc = ad.where(inflow, Ad.constant(c_inj, pb.width), cells.c)
    q_p = q_w * conc * (1.0 / model.water.surface_density)
    return PerforationRates(q_o, q_w, q_p)


def constraint_residual(well: Well, pb: Ad, q_oil_sc: Ad, q_water_sc: Ad, first_cell_p: Ad | None) -> Ad:
    """Control equation of ``well``.

    ``q_oil_sc``/``q_water_sc`` are summed surface volumetric rates (positive
    into the reservoir). A closed well pins ``P_b`` to the first perforated
    cell pressure so the system stays square.
    """
    if not well.is_open:
        if first_cell_p is None:
            return pb - pb.val
        return pb - first_cell_p
    c = well.constraint
    if c.kind == "BHP":
        return pb - c.target
    target = well.sign * c.target
    if c.kind == "WRATE":
        return q_water_sc - target
    if c.kind == "ORATE":
        return q_oil_sc - target
    return q_oil_sc + q_water_sc - target


def constraint_scale(well: Well, pressure_scale: float) -> float:
    """Residual normalization of a well row."""
    if not well.is_open or well.constraint.kind == "BHP":
        return 1.0 / pressure_scale
    return 1.0 / max(abs(well.constraint.target), 1e-12)


def switch_constraint(well: Well, pb: float, q_oil_sc: float, q_water_sc: float) -> bool:
    """Check the BHP limit of a rate-controlled well and its reverse.

    Returns True when the active control changed (the step must be re-solved).
    """
    if not well.is_open:
        return False
    c = well.constraint
    if c.kind in RATE_CONTROLS and c.bound is not None:
        violated = pb > c.bound if well.injector else pb < c.bound
        if violated:
            if well.switches >= MAX_SWITCH_CYCLES:
                return False
            well.rate_constraint = c
            well.constraint = WellConstraint("BHP", c.bound)
            well.switches += 1
            return True
        return False
    if c.kind == "BHP" and well.rate_constraint is not None:
        rc = well.rate_constraint
        rate = {"WRATE": q_water_sc, "ORATE": q_oil_sc, "LRATE": q_oil_sc + q_water_sc}[rc.kind]
        if abs(rate) > rc.target * (1.0 + 1e-9) and well.sign * rate > 0:
            if well.switches >= MAX_SWITCH_CYCLES:
                msg = f"well {well.name}: control oscillation, keeping BHP control"
                if msg not in well.notes:
                    well.notes.append(msg)
                    warnings.warn(msg, RuntimeWarning, stacklevel=2)
                return False
            well.constraint = rc
            well.rate_constraint = None
            well.switches += 1
            return True
    return False


def well_gradient(model, rho_o, rho_w, q_oil_res, q_water_res, mob_o, mob_w) -> float:
    """Mixture unit weight in the wellbore (Pa/m).

    Weighted by phase volumetric rates; falls back to mobility weights when
    the well carries no flow.
    """
    wo = np.abs(q_oil_res).sum()
    ww = np.abs(q_water_res).sum()
    if wo + ww <= 0.0:
        wo_v, ww_v = np.asarray(mob_o), np.asarray(mob_w)
        if wo_v.sum() + ww_v.sum() <= 0.0:
            return GRAVITY * float(np.mean(rho_w))
        return GRAVITY * float(np.sum(wo_v * rho_o + ww_v * rho_w) / np.sum(wo_v + ww_v))
    num = np.sum(np.abs(q_oil_res) * rho_o) + np.sum(np.abs(q_water_res) * rho_w)
    return GRAVITY * float(num / (wo + ww))
