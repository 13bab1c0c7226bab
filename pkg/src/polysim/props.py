"""Rock, fluid and polymer property evaluation with analytic derivatives.

Each evaluator takes plain arrays and returns values together with their
derivative with respect to the single argument, so callers can chain them
through :meth:`polysim.ad.Ad.chain`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ad import Ad
from .deck import PropertyTable, SimulationDeck


class NonPhysicalState(ArithmeticError):
    """A Newton iterate left the physically admissible region."""


@dataclass(eq=False)
class Phase:
    surface_density: float
    fvf: float
    compressibility: float
    viscosity: float
    ref_pressure: float


@dataclass(eq=False)
class PropertyModel:
    poro_ref: np.ndarray
    rock_compressibility: float
    rock_ref_pressure: float
    rock_density: float
    water: Phase
    oil: Phase
    swof: PropertyTable
    adsorption_table: PropertyTable | None
    ipv: float
    rrf: float
    ads_max: float
    omega: float
    mu_poly_ref: float
    c_ref: float
    mixing: str

    @classmethod
    def from_deck(cls, deck: SimulationDeck) -> "PropertyModel":
        """Build from an SI deck."""
        if deck.unit_system != "SI":
            raise ValueError("property model expects an SI deck")
        r = deck.rock

        def phase(p):
            ref = p.ref_pressure if p.ref_pressure is not None else r.ref_pressure
            return Phase(p.surface_density, p.fvf, p.compressibility, p.viscosity, ref)

        pol = deck.polymer
        water = phase(deck.water)
        return cls(
            poro_ref=r.poro.copy(),
            rock_compressibility=r.compressibility,
            rock_ref_pressure=r.ref_pressure,
            rock_density=r.density,
            water=water,
            oil=phase(deck.oil),
            swof=deck.swof,
            adsorption_table=pol.adsorption,
            ipv=pol.ipv,
            rrf=pol.rrf,
            ads_max=pol.ads_max,
            omega=pol.omega,
            mu_poly_ref=pol.mu_ref if pol.mu_ref is not None else water.viscosity,
            c_ref=pol.c_ref,
            mixing=pol.mixing,
        )

    def subset(self, cells: np.ndarray) -> "PropertyModel":
        """Same model restricted to a list of cells (per-cell data sliced)."""
        out = PropertyModel(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        out.poro_ref = self.poro_ref[cells]
        return out

    # rock ------------------------------------------------------------------
    def porosity(self, p, poro_ref=None):
        """``phi = phi_r + c_r (P - P_r)`` and ``dphi/dP``."""
        phi_r = self.poro_ref if poro_ref is None else poro_ref
        p = np.asarray(p, dtype=float)
        phi = phi_r + self.rock_compressibility * (p - self.rock_ref_pressure)
        return phi, np.full(phi.shape, self.rock_compressibility)

    # fluids ----------------------------------------------------------------
    def phase(self, name: str) -> Phase:
        return self.water if name == "water" else self.oil

    def density(self, p, phase: str):
        """``rho = (rho_sc / B) (1 + c (P - P_ref))`` and ``drho/dP``."""
        ph = self.phase(phase)
        p = np.asarray(p, dtype=float)
        base = ph.surface_density / ph.fvf
        rho = base * (1.0 + ph.compressibility * (p - ph.ref_pressure))
        return rho, np.full(rho.shape, base * ph.compressibility)

    def relperm_capillary(self, sw):
        """``(krw, kro, pc)`` and their ``S_w`` derivatives, each shaped like ``sw``."""
        val, slope = self.swof.lookup(sw)
        return (val[..., 0], val[..., 1], val[..., 2]), (slope[..., 0], slope[..., 1], slope[..., 2])

    # polymer ---------------------------------------------------------------
    def adsorption(self, c):
        """Adsorbed polymer mass per rock mass (kg/kg), capped at the maximum."""
        c = np.asarray(c, dtype=float)
        if self.adsorption_table is None:
            return np.zeros(c.shape), np.zeros(c.shape)
        a, da = self.adsorption_table.lookup(c)
        capped = a >= self.ads_max
        return np.where(capped, self.ads_max, a), np.where(capped, 0.0, da)

    def adsorbed_mass(self, c):
        """``A_d = rho_rock a(C)`` in kg per m^3 of rock."""
        a, da = self.adsorption(c)
        return self.rock_density * a, self.rock_density * da

    def permeability_reduction(self, c, history=None):
        """``R_k = 1 + (RRF - 1) A_d / A_d,max`` and ``dR_k/dC``.

        ``history`` is the per-cell maximum adsorption (kg/kg) reached so far;
        the reduction follows the larger of it and the current adsorption.
        """
        a, da = self.adsorption(c)
        if history is not None:
            hist = np.asarray(history, dtype=float)
            below = a < hist
            a = np.where(below, hist, a)
            da = np.where(below, 0.0, da)
        scale = (self.rrf - 1.0) / self.ads_max
        return 1.0 + scale * a, scale * da

    def beta(self, c):
        """``min(C / C_ref, 1)`` clipped at zero, with derivative."""
        c = np.asarray(c, dtype=float)
        b = np.clip(c / self.c_ref, 0.0, 1.0)
        db = np.where((c >= 0.0) & (c < self.c_ref), 1.0 / self.c_ref, 0.0)
        return b, db

    def mixture_viscosity(self, c):
        b, db = self.beta(c)
        mu_w, mu_p = self.water.viscosity, self.mu_poly_ref
        if self.mixing == "LINEAR":
            mu = b * mu_p + (1.0 - b) * mu_w
            return mu, (mu_p - mu_w) * db
        mu = mu_p**b * mu_w ** (1.0 - b)
        return mu, mu * np.log(mu_p / mu_w) * db

    def todd_longstaff(self, c):
        """Effective polymer and water viscosities with ``C`` derivatives.

        Returns ``(mu_pe, dmu_pe, mu_we, dmu_we)``.
        """
        w = self.omega
        mu_w, mu_p = self.water.viscosity, self.mu_poly_ref
        mu_m, dmu_m = self.mixture_viscosity(c)
        mu_pe = mu_m**w * mu_p ** (1.0 - w)
        dmu_pe = w * mu_pe / mu_m * dmu_m
        mu_wp = mu_m**w * mu_w ** (1.0 - w)
        dmu_wp = w * mu_wp / mu_m * dmu_m
        alpha, dalpha = self.beta(c)
        g = alpha / mu_pe + (1.0 - alpha) / mu_wp
        dg = dalpha * (1.0 / mu_pe - 1.0 / mu_wp) - alpha * dmu_pe / mu_pe**2 - (1.0 - alpha) * dmu_wp / mu_wp**2
        mu_we = 1.0 / g
        return mu_pe, dmu_pe, mu_we, -dg * mu_we**2

    def polymer_porosity(self, phi):
        return phi * (1.0 - self.ipv)


@dataclass(eq=False)
class CellProps:
    """Properties of a batch of cells as :class:`Ad` objects sharing one layout."""

    p: Ad
    s: Ad
    c: Ad
    pw: Ad
    phi: Ad
    rho_o: Ad
    rho_w: Ad
    krw: Ad
    kro: Ad
    pc: Ad
    rk: Ad
    mu_we: Ad
    mu_pe: Ad
    ads: Ad  # kg/kg

    def take(self, idx, offset: int, width: int) -> "CellProps":
        """Entries ``idx`` with gradients moved into a wider layout."""
        return CellProps(**{k: getattr(self, k)[idx].embed(offset, width) for k in self.__dataclass_fields__})


def cell_properties(model: PropertyModel, p: Ad, s: Ad, c: Ad, history=None, poro_ref=None) -> CellProps:
    (krw, kro, pc), (dkrw, dkro, dpc) = model.relperm_capillary(s.val)
    pc_ad = s.chain(pc, dpc)
    pw = p - pc_ad
    phi = p.chain(*model.porosity(p.val, poro_ref))
    rho_o = p.chain(*model.density(p.val, "oil"))
    rho_w = pw.chain(*model.density(pw.val, "water"))
    mu_pe, dmu_pe, mu_we, dmu_we = model.todd_longstaff(c.val)
    return CellProps(
        p=p,
        s=s,
        c=c,
        pw=pw,
        phi=phi,
        rho_o=rho_o,
        rho_w=rho_w,
        krw=s.chain(krw, dkrw),
        kro=s.chain(kro, dkro),
        pc=pc_ad,
        rk=c.chain(*model.permeability_reduction(c.val, history)),
        mu_we=c.chain(mu_we, dmu_we),
        mu_pe=c.chain(mu_pe, dmu_pe),
        ads=c.chain(*model.adsorption(c.val)),
    )
