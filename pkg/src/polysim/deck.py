"""Input deck: parsing, unit normalization, validation and a canonical writer.

The deck is a small keyword/section text format::

    UNITS METRIC
    GRID 15 1 1
    DX 100
    ...
    SWOF
      0.2  0.0  1.0  0.0
      0.8  0.6  0.0  0.0
    /
    END

Array keywords (``DX``, ``PORO``, ...) take one value (broadcast) or one value
per cell, with ``n*v`` repeat counts. Table keywords hold rows terminated by a
``/`` line. ``#`` starts a comment.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from . import units


class DeckError(ValueError):
    """Raised for malformed decks; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}" if line is not None else message)


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------


@dataclass(eq=False)
class PropertyTable:
    """Piecewise-linear table with clamped extrapolation.

    ``y`` may be 1-D or hold several columns (shape ``(n, k)``).
    """

    x: np.ndarray
    y: np.ndarray
    extrapolation: str = "clamp"

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim != 1 or self.x.size < 2:
            raise ValueError("table needs at least 2 breakpoints")
        if np.any(np.diff(self.x) <= 0.0):
            raise ValueError("table breakpoints must be strictly increasing")
        if self.y.shape[0] != self.x.size:
            raise ValueError("table value count does not match breakpoints")

    def lookup(self, xq):
        """Return ``(value, slope)`` at ``xq``.

        Slopes are segment slopes; at an interior breakpoint the lower
        segment is used, outside the table the slope is zero.
        """
        xq = np.asarray(xq, dtype=float)
        x, y = self.x, self.y
        seg = np.clip(np.searchsorted(x, xq, side="left") - 1, 0, x.size - 2)
        x0 = x[seg]
        h = x[seg + 1] - x0
        if y.ndim == 1:
            t = (xq - x0) / h
            slope = (y[seg + 1] - y[seg]) / h
            val = (1.0 - t) * y[seg] + t * y[seg + 1]
        else:
            t = ((xq - x0) / h)[..., None]
            slope = (y[seg + 1] - y[seg]) / h[..., None]
            val = (1.0 - t) * y[seg] + t * y[seg + 1]
        below = xq < x[0]
        above = xq > x[-1]
        if np.any(below) or np.any(above):
            val = np.where(_expand(below, y), y[0], val)
            val = np.where(_expand(above, y), y[-1], val)
            slope = np.where(_expand(below | above, y), 0.0, slope)
        return val, slope


def _expand(mask, y):
    return mask[..., None] if y.ndim > 1 else mask


@dataclass(eq=False)
class GridSpec:
    nx: int
    ny: int
    nz: int
    dx: np.ndarray
    dy: np.ndarray
    dz: np.ndarray
    tops: np.ndarray

    @property
    def ncells(self) -> int:
        return self.nx * self.ny * self.nz


@dataclass(eq=False)
class RockSpec:
    poro: np.ndarray
    permx: np.ndarray
    permy: np.ndarray
    permz: np.ndarray
    compressibility: float
    ref_pressure: float
    density: float


@dataclass(eq=False)
class PhasePVT:
    surface_density: float
    fvf: float
    compressibility: float
    viscosity: float
    ref_pressure: float | None = None


@dataclass(eq=False)
class PolymerSpec:
    adsorption: PropertyTable | None = None
    ipv: float = 0.0
    rrf: float = 1.0
    ads_max: float = 1.0
    omega: float = 1.0
    mu_ref: float | None = None
    c_ref: float = 1.0
    mixing: str = "LINEAR"


@dataclass(eq=False)
class InitSpec:
    kind: str  # "UNIFORM" or "EQUIL"
    pressure: float = 0.0
    sw: float = 0.0
    cp: float = 0.0
    datum_depth: float = 0.0
    owc_depth: float = 0.0
    pc_owc: float = 0.0


@dataclass(eq=False)
class PerfSpec:
    i: int  # 1-based
    j: int
    k: int
    direction: str = "Z"
    f: float = 1.0
    fh: float = 1.0
    gf: float = 0.249
    skin: float | None = None


@dataclass(eq=False)
class WellSpec:
    name: str
    kind: str  # "INJ" or "PROD"
    rw: float
    skin: float = 0.0
    ref_depth: float | None = None
    perforations: list[PerfSpec] = field(default_factory=list)


@dataclass(eq=False)
class Action:
    kind: str  # OPEN, SHUT, CONTROL, POLYMER, DTMAX
    well: str | None = None
    control: str | None = None  # BHP, WRATE, ORATE, LRATE
    value: float | None = None
    bound: float | None = None
    conc: float | None = None


@dataclass(eq=False)
class ScheduleEvent:
    time: float
    actions: list[Action] = field(default_factory=list)


@dataclass(eq=False)
class Schedule:
    events: list[ScheduleEvent] = field(default_factory=list)
    end_time: float = 0.0


@dataclass(eq=False)
class SolverConfig:
    """Numerical controls; ``None`` means "use the built-in default"."""

    newton_tol: float | None = None
    newton_max_iter: int | None = None
    newton_mode: str | None = None
    eta_fixed: float | None = None
    eta_min: float | None = None
    eta_max: float | None = None
    forcing_gamma: float | None = None
    forcing_beta: float | None = None
    mb_tol: float | None = None
    dt_init: float | None = None
    dt_max: float | None = None
    dt_min: float | None = None
    dt_growth: float | None = None
    dt_cut: float | None = None
    max_dsw: float | None = None
    max_dp: float | None = None
    max_dcp: float | None = None
    gmres_restart: int | None = None
    gmres_max_iter: int | None = None
    precond: str | None = None
    ras_overlap: int | None = None
    amg_theta: float | None = None
    amg_max_levels: int | None = None
    amg_smoother: str | None = None
    amg_sweeps: int | None = None
    amg_omega: float | None = None
    amg_max_coarse: int | None = None


@dataclass(eq=False)
class SimulationDeck:
    unit_system: str
    grid: GridSpec
    rock: RockSpec
    water: PhasePVT
    oil: PhasePVT
    swof: PropertyTable
    polymer: PolymerSpec
    init: InitSpec
    wells: list[WellSpec] = field(default_factory=list)
    schedule: Schedule = field(default_factory=Schedule)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __eq__(self, other):
        if not isinstance(other, SimulationDeck):
            return NotImplemented
        return _equal(self, other)


def _equal(a, b) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, np.ndarray):
        return a.shape == b.shape and bool(np.array_equal(a, b))
    if dataclasses.is_dataclass(a):
        return all(_equal(getattr(a, f.name), getattr(b, f.name)) for f in dataclasses.fields(a))
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(_equal(x, y) for x, y in zip(a, b))
    return a == b


# keyword -> unit kind for solver options; "int" / "str" for non-float
_SOLVER_KEYS = {
    "NEWTON_TOL": ("newton_tol", "none"),
    "NEWTON_MAXIT": ("newton_max_iter", "int"),
    "NEWTON_MODE": ("newton_mode", "str"),
    "ETA_FIXED": ("eta_fixed", "none"),
    "ETA_MIN": ("eta_min", "none"),
    "ETA_MAX": ("eta_max", "none"),
    "FORCING_GAMMA": ("forcing_gamma", "none"),
    "FORCING_BETA": ("forcing_beta", "none"),
    "MB_TOL": ("mb_tol", "none"),
    "DT_INIT": ("dt_init", "time"),
    "DT_MAX": ("dt_max", "time"),
    "DT_MIN": ("dt_min", "time"),
    "DT_GROWTH": ("dt_growth", "none"),
    "DT_CUT": ("dt_cut", "none"),
    "MAX_DSW": ("max_dsw", "none"),
    "MAX_DP": ("max_dp", "pressure"),
    "MAX_DCP": ("max_dcp", "concentration"),
    "GMRES_RESTART": ("gmres_restart", "int"),
    "GMRES_MAXIT": ("gmres_max_iter", "int"),
    "PRECOND": ("precond", "str"),
    "RAS_OVERLAP": ("ras_overlap", "int"),
    "AMG_THETA": ("amg_theta", "none"),
    "AMG_MAXLEVELS": ("amg_max_levels", "int"),
    "AMG_SMOOTHER": ("amg_smoother", "str"),
    "AMG_SWEEPS": ("amg_sweeps", "int"),
    "AMG_OMEGA": ("amg_omega", "none"),
    "AMG_MAX_COARSE": ("amg_max_coarse", "int"),
}

_ARRAY_KEYWORDS = ("DX", "DY", "DZ", "TOPS", "PORO", "PERMX", "PERMY", "PERMZ")
_TABLE_KEYWORDS = ("SWOF", "PLYADS", "WELSPECS", "COMPDAT", "SCHEDULE", "SOLVER")
_LINE_KEYWORDS = ("UNITS", "GRID", "ROCKC", "PVTW", "PVTO", "PLYROCK", "PLYVISC", "INIT", "EQUIL", "END")
KEYWORDS = _ARRAY_KEYWORDS + _TABLE_KEYWORDS + _LINE_KEYWORDS
MANDATORY = ("GRID", "DX", "DY", "DZ", "PORO", "PERMX", "ROCKC", "PVTW", "PVTO", "SWOF", "END")


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------


def _strip(line: str) -> str:
    pos = line.find("#")
    if pos >= 0:
        line = line[:pos]
    return line.strip()


def _float(tok: str, lineno: int) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise DeckError(f"expected a number, got {tok!r}", lineno) from None
    if not math.isfinite(val):
        raise DeckError(f"non-finite number {tok!r}", lineno)
    return val


def _int(tok: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise DeckError(f"expected an integer, got {tok!r}", lineno) from None


def _expand_values(tokens: list[tuple[str, int]]) -> list[float]:
    out: list[float] = []
    for tok, lineno in tokens:
        if "*" in tok:
            count, _, value = tok.partition("*")
            n = _int(count, lineno)
            if n < 1:
                raise DeckError(f"bad repeat count in {tok!r}", lineno)
            out.extend([_float(value, lineno)] * n)
        else:
            out.append(_float(tok, lineno))
    return out


def _is_keyword_line(line: str) -> bool:
    head = line.split()[0]
    return head[0].isalpha() and head.upper() == head and not head.startswith(("INF", "NAN"))


def parse_deck(text: str) -> SimulationDeck:
    """Parse deck text into a :class:`SimulationDeck` in its declared units."""
    lines = [(_strip(raw), n + 1) for n, raw in enumerate(text.splitlines())]
    lines = [(s, n) for s, n in lines if s]
    seen: dict[str, int] = {}
    arrays: dict[str, tuple[list[float], int]] = {}
    tables: dict[str, list[tuple[list[str], int]]] = {}
    single: dict[str, tuple[list[str], int]] = {}

    pos = 0
    ended = False
    while pos < len(lines):
        line, lineno = lines[pos]
        tokens = line.split()
        key = tokens[0].upper()
        if ended:
            raise DeckError("content after END", lineno)
        if key not in KEYWORDS:
            raise DeckError(f"unknown keyword {tokens[0]!r}", lineno)
        if key in seen:
            raise DeckError(f"keyword {key} repeated (first on line {seen[key]})", lineno)
        seen[key] = lineno
        pos += 1
        if key in _ARRAY_KEYWORDS:
            toks = [(t, lineno) for t in tokens[1:]]
            while pos < len(lines):
                nxt, nline = lines[pos]
                if nxt == "/":
                    pos += 1
                    break
                if _is_keyword_line(nxt):
                    break
                toks.extend((t, nline) for t in nxt.split())
                pos += 1
            if not toks:
                raise DeckError(f"{key} has no values", lineno)
            arrays[key] = (_expand_values(toks), lineno)
        elif key in _TABLE_KEYWORDS:
            if len(tokens) > 1:
                raise DeckError(f"{key} takes its rows on the following lines", lineno)
            rows = []
            closed = False
            while pos < len(lines):
                nxt, nline = lines[pos]
                pos += 1
                if nxt == "/":
                    closed = True
                    break
                rows.append((nxt.split(), nline))
            if not closed:
                raise DeckError(f"{key} section not terminated by '/'", lineno)
            tables[key] = rows
        else:
            single[key] = (tokens[1:], lineno)
            if key == "END":
                ended = True

    missing = [k for k in MANDATORY if k not in seen]
    if "INIT" not in seen and "EQUIL" not in seen:
        missing.append("INIT or EQUIL")
    if missing:
        raise DeckError("missing mandatory section(s): " + ", ".join(missing))
    if "INIT" in seen and "EQUIL" in seen:
        raise DeckError("INIT and EQUIL are mutually exclusive", seen["EQUIL"])

    unit_system = "METRIC"
    if "UNITS" in single:
        toks, lineno = single["UNITS"]
        if len(toks) != 1 or toks[0].upper() not in units.UNIT_SYSTEMS:
            raise DeckError("UNITS must be one of METRIC, FIELD, SI", lineno)
        unit_system = toks[0].upper()

    grid = _parse_grid(single["GRID"], arrays)
    rock = _parse_rock(single["ROCKC"], arrays, grid)
    water = _parse_pvt(*single["PVTW"])
    oil = _parse_pvt(*single["PVTO"])
    swof = _parse_table("SWOF", tables["SWOF"], 4, seen["SWOF"])
    polymer = _parse_polymer(single, tables, seen)
    init = _parse_init(single)
    wells = _parse_wells(tables.get("WELSPECS", []), tables.get("COMPDAT", []))
    schedule = _parse_schedule(tables.get("SCHEDULE", []))
    solver = _parse_solver(tables.get("SOLVER", []))
    return SimulationDeck(
        unit_system=unit_system,
        grid=grid,
        rock=rock,
        water=water,
        oil=oil,
        swof=swof,
        polymer=polymer,
        init=init,
        wells=wells,
        schedule=schedule,
        solver=solver,
    )


def _need(toks: list[str], lo: int, hi: int, key: str, lineno: int):
    if not lo <= len(toks) <= hi:
        if lo == hi:
            raise DeckError(f"{key} expects {lo} values, got {len(toks)}", lineno)
        raise DeckError(f"{key} expects {lo} to {hi} values, got {len(toks)}", lineno)


def _cell_array(arrays, key: str, n: int) -> np.ndarray:
    values, lineno = arrays[key]
    if len(values) == 1:
        return np.full(n, values[0])
    if len(values) != n:
        raise DeckError(f"{key} expects 1 or {n} values, got {len(values)}", lineno)
    return np.array(values, dtype=float)


def _parse_grid(entry, arrays) -> GridSpec:
    toks, lineno = entry
    _need(toks, 3, 3, "GRID", lineno)
    nx, ny, nz = (_int(t, lineno) for t in toks)
    if min(nx, ny, nz) < 1:
        raise DeckError("GRID dimensions must be >= 1", lineno)
    n = nx * ny * nz
    tops = _cell_array(arrays, "TOPS", nx * ny) if "TOPS" in arrays else np.zeros(nx * ny)
    return GridSpec(
        nx, ny, nz, _cell_array(arrays, "DX", n), _cell_array(arrays, "DY", n), _cell_array(arrays, "DZ", n), tops
    )


def _parse_rock(entry, arrays, grid: GridSpec) -> RockSpec:
    toks, lineno = entry
    _need(toks, 3, 3, "ROCKC", lineno)
    c_r, p_r, rho = (_float(t, lineno) for t in toks)
    n = grid.ncells
    permx = _cell_array(arrays, "PERMX", n)
    permy = _cell_array(arrays, "PERMY", n) if "PERMY" in arrays else permx.copy()
    permz = _cell_array(arrays, "PERMZ", n) if "PERMZ" in arrays else permx.copy()
    return RockSpec(_cell_array(arrays, "PORO", n), permx, permy, permz, c_r, p_r, rho)


def _parse_pvt(toks, lineno) -> PhasePVT:
    _need(toks, 4, 5, "PVT", lineno)
    vals = [_float(t, lineno) for t in toks]
    return PhasePVT(vals[0], vals[1], vals[2], vals[3], vals[4] if len(vals) == 5 else None)


def _parse_table(key: str, rows, ncols: int, lineno: int) -> PropertyTable:
    data = []
    for toks, nline in rows:
        if len(toks) != ncols:
            raise DeckError(f"{key} rows need {ncols} columns, got {len(toks)}", nline)
        data.append([_float(t, nline) for t in toks])
    if len(data) < 2:
        raise DeckError(f"{key} needs at least 2 rows", lineno)
    arr = np.array(data)
    x = arr[:, 0]
    bad = np.nonzero(np.diff(x) <= 0.0)[0]
    if bad.size:
        raise DeckError(f"{key} table is not monotone: first column must strictly increase", rows[bad[0] + 1][1])
    y = arr[:, 1] if ncols == 2 else arr[:, 1:]
    return PropertyTable(x, y)


def _parse_polymer(single, tables, seen) -> PolymerSpec:
    spec = PolymerSpec()
    if "PLYADS" in tables:
        spec.adsorption = _parse_table("PLYADS", tables["PLYADS"], 2, seen["PLYADS"])
    if "PLYROCK" in single:
        toks, lineno = single["PLYROCK"]
        _need(toks, 3, 3, "PLYROCK", lineno)
        spec.ipv, spec.rrf, spec.ads_max = (_float(t, lineno) for t in toks)
    if "PLYVISC" in single:
        toks, lineno = single["PLYVISC"]
        _need(toks, 4, 4, "PLYVISC", lineno)
        spec.omega = _float(toks[0], lineno)
        spec.mu_ref = _float(toks[1], lineno)
        spec.c_ref = _float(toks[2], lineno)
        rule = toks[3].upper()
        if rule not in ("LINEAR", "NONLINEAR"):
            raise DeckError("mixing rule must be LINEAR or NONLINEAR", lineno)
        spec.mixing = rule
    return spec


def _parse_init(single) -> InitSpec:
    if "INIT" in single:
        toks, lineno = single["INIT"]
        _need(toks, 3, 3, "INIT", lineno)
        p, sw, cp = (_float(t, lineno) for t in toks)
        return InitSpec("UNIFORM", pressure=p, sw=sw, cp=cp)
    toks, lineno = single["EQUIL"]
    _need(toks, 3, 5, "EQUIL", lineno)
    vals = [_float(t, lineno) for t in toks] + [0.0] * (5 - len(toks))
    return InitSpec("EQUIL", datum_depth=vals[0], pressure=vals[1], owc_depth=vals[2], pc_owc=vals[3], cp=vals[4])


def _parse_wells(welspecs, compdat) -> list[WellSpec]:
    wells: dict[str, WellSpec] = {}
    for toks, lineno in welspecs:
        _need(toks, 4, 5, "WELSPECS", lineno)
        name = toks[0]
        kind = toks[1].upper()
        if kind not in ("INJ", "PROD"):
            raise DeckError("well type must be INJ or PROD", lineno)
        if name in wells:
            raise DeckError(f"well {name} defined twice", lineno)
        ref = _float(toks[4], lineno) if len(toks) == 5 else None
        wells[name] = WellSpec(name, kind, _float(toks[2], lineno), _float(toks[3], lineno), ref)
    for toks, lineno in compdat:
        _need(toks, 5, 9, "COMPDAT", lineno)
        name = toks[0]
        if name not in wells:
            raise DeckError(f"COMPDAT references undefined well {name!r}", lineno)
        direction = toks[4].upper()
        if direction not in ("X", "Y", "Z"):
            raise DeckError("perforation direction must be X, Y or Z", lineno)
        opt = [_float(t, lineno) for t in toks[5:]]
        perf = PerfSpec(_int(toks[1], lineno), _int(toks[2], lineno), _int(toks[3], lineno), direction)
        if len(opt) > 0:
            perf.f = opt[0]
        if len(opt) > 1:
            perf.fh = opt[1]
        if len(opt) > 2:
            perf.gf = opt[2]
        if len(opt) > 3:
            perf.skin = opt[3]
        wells[name].perforations.append(perf)
    return list(wells.values())


_CONTROLS = ("BHP", "WRATE", "ORATE", "LRATE")


def _parse_schedule(rows) -> Schedule:
    sched = Schedule()
    current: ScheduleEvent | None = None
    stop_seen = False
    for toks, lineno in rows:
        key = toks[0].upper()
        if stop_seen:
            raise DeckError("content after STOP in SCHEDULE", lineno)
        if key == "AT":
            _need(toks[1:], 1, 1, "AT", lineno)
            current = ScheduleEvent(_float(toks[1], lineno))
            sched.events.append(current)
            continue
        if key == "STOP":
            _need(toks[1:], 1, 1, "STOP", lineno)
            sched.end_time = _float(toks[1], lineno)
            stop_seen = True
            continue
        if current is None:
            raise DeckError("schedule action before any AT line", lineno)
        if key in ("OPEN", "SHUT"):
            _need(toks[1:], 1, 1, key, lineno)
            current.actions.append(Action(key, toks[1]))
        elif key == "POLYMER":
            _need(toks[1:], 2, 2, key, lineno)
            current.actions.append(Action(key, toks[1], conc=_float(toks[2], lineno)))
        elif key == "DTMAX":
            _need(toks[1:], 1, 1, key, lineno)
            current.actions.append(Action(key, value=_float(toks[1], lineno)))
        elif key == "CONTROL":
            if len(toks) < 4:
                raise DeckError("CONTROL expects: well kind value [BHPMAX|BHPMIN v] [CONC v]", lineno)
            kind = toks[2].upper()
            if kind not in _CONTROLS:
                raise DeckError(f"unknown control {toks[2]!r}", lineno)
            act = Action("CONTROL", toks[1], control=kind, value=_float(toks[3], lineno))
            rest = toks[4:]
            if len(rest) % 2:
                raise DeckError("CONTROL options come in name/value pairs", lineno)
            for opt, val in zip(rest[::2], rest[1::2]):
                opt = opt.upper()
                if opt in ("BHPMAX", "BHPMIN"):
                    act.bound = _float(val, lineno)
                elif opt == "CONC":
                    act.conc = _float(val, lineno)
                else:
                    raise DeckError(f"unknown CONTROL option {opt!r}", lineno)
            current.actions.append(act)
        else:
            raise DeckError(f"unknown schedule keyword {toks[0]!r}", lineno)
    return sched


def _parse_solver(rows) -> SolverConfig:
    cfg = SolverConfig()
    for toks, lineno in rows:
        _need(toks, 2, 2, "SOLVER", lineno)
        key = toks[0].upper()
        if key not in _SOLVER_KEYS:
            raise DeckError(f"unknown solver option {toks[0]!r}", lineno)
        name, kind = _SOLVER_KEYS[key]
        if kind == "int":
            value = _int(toks[1], lineno)
        elif kind == "str":
            value = toks[1].upper()
        else:
            value = _float(toks[1], lineno)
        setattr(cfg, name, value)
    return cfg


def load_deck(path) -> SimulationDeck:
    with open(path, encoding="utf-8") as fh:
        return parse_deck(fh.read())


# --------------------------------------------------------------------------
# Units
# --------------------------------------------------------------------------


def convert_to_si(deck: SimulationDeck) -> SimulationDeck:
    """Return a copy of ``deck`` with every quantity in SI units."""
    if deck.unit_system == "SI":
        return deck
    f = lambda kind: units.factor(deck.unit_system, kind)  # noqa: E731
    L, K, P, C, MU = f("length"), f("permeability"), f("pressure"), f("compressibility"), f("viscosity")
    RHO, T, Q, CONC = f("density"), f("time"), f("rate"), f("concentration")

    def opt(v, s):
        return None if v is None else v * s

    g = deck.grid
    grid = GridSpec(g.nx, g.ny, g.nz, g.dx * L, g.dy * L, g.dz * L, g.tops * L)
    r = deck.rock
    rock = RockSpec(r.poro.copy(), r.permx * K, r.permy * K, r.permz * K, r.compressibility * C, r.ref_pressure * P,
                    r.density * RHO)

    def pvt(p: PhasePVT) -> PhasePVT:
        return PhasePVT(p.surface_density * RHO, p.fvf, p.compressibility * C, p.viscosity * MU,
                        opt(p.ref_pressure, P))

    sw = deck.swof
    swof = PropertyTable(sw.x.copy(), sw.y * np.array([1.0, 1.0, P]))
    pol = deck.polymer
    ads = None
    if pol.adsorption is not None:
        ads = PropertyTable(pol.adsorption.x * CONC, pol.adsorption.y.copy())
    polymer = PolymerSpec(ads, pol.ipv, pol.rrf, pol.ads_max, pol.omega, opt(pol.mu_ref, MU), pol.c_ref * CONC,
                          pol.mixing)
    i = deck.init
    init = InitSpec(i.kind, i.pressure * P, i.sw, i.cp * CONC, i.datum_depth * L, i.owc_depth * L, i.pc_owc * P)
    wells = [
        WellSpec(w.name, w.kind, w.rw * L, w.skin, opt(w.ref_depth, L), [replace(p) for p in w.perforations])
        for w in deck.wells
    ]
    events = []
    for ev in deck.schedule.events:
        acts = []
        for a in ev.actions:
            if a.kind == "DTMAX":
                acts.append(Action("DTMAX", value=a.value * T))
            elif a.kind == "CONTROL":
                vs = P if a.control == "BHP" else Q
                acts.append(Action("CONTROL", a.well, a.control, a.value * vs, opt(a.bound, P), opt(a.conc, CONC)))
            elif a.kind == "POLYMER":
                acts.append(Action("POLYMER", a.well, conc=a.conc * CONC))
            else:
                acts.append(replace(a))
        events.append(ScheduleEvent(ev.time * T, acts))
    schedule = Schedule(events, deck.schedule.end_time * T)
    solver = replace(deck.solver)
    for key, (name, kind) in _SOLVER_KEYS.items():
        val = getattr(solver, name)
        if val is not None and kind not in ("int", "str", "none"):
            setattr(solver, name, val * f(kind))
    return SimulationDeck("SI", grid, rock, pvt(deck.water), pvt(deck.oil), swof, polymer, init, wells, schedule,
                          solver)


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" or "warning"
    message: str


def validate(deck: SimulationDeck) -> list[Diagnostic]:
    """Check deck invariants; an empty list means the deck is usable."""
    out: list[Diagnostic] = []

    def err(msg):
        out.append(Diagnostic("error", msg))

    def warn(msg):
        out.append(Diagnostic("warning", msg))

    g = deck.grid
    if min(g.nx, g.ny, g.nz) < 1:
        err("grid dimensions must be >= 1")
    for name, arr in (("DX", g.dx), ("DY", g.dy), ("DZ", g.dz)):
        if np.any(arr <= 0):
            err(f"{name} must be positive")
    r = deck.rock
    if np.any((r.poro <= 0) | (r.poro >= 1)):
        err("porosity must lie in (0,1)")
    for name, arr in (("PERMX", r.permx), ("PERMY", r.permy), ("PERMZ", r.permz)):
        if np.any(arr <= 0):
            err(f"{name} must be positive")
    if r.compressibility < 0:
        err("rock compressibility must be non-negative")
    if r.density <= 0:
        err("rock density must be positive")
    for label, p in (("water", deck.water), ("oil", deck.oil)):
        if p.surface_density <= 0:
            err(f"{label} density must be positive")
        if p.viscosity <= 0:
            err(f"{label} viscosity must be positive")
        if p.fvf <= 0:
            err(f"{label} formation volume factor must be positive")
        if p.compressibility < 0:
            err(f"{label} compressibility must be non-negative")
    sw = deck.swof
    if np.any((sw.x < 0) | (sw.x > 1)):
        err("SWOF saturations must lie in [0,1]")
    if np.any((sw.y[:, :2] < 0) | (sw.y[:, :2] > 1)):
        err("relative permeabilities must lie in [0,1]")
    pol = deck.polymer
    if not 0.0 <= pol.ipv < 1.0:
        err("IPV must lie in [0,1)")
    if pol.rrf < 1.0:
        err("RRF must be >= 1")
    if pol.ads_max <= 0:
        err("maximum adsorption must be positive")
    if not 0.0 <= pol.omega <= 1.0:
        err("mixing parameter omega must lie in [0,1]")
    if pol.c_ref <= 0:
        err("reference polymer concentration must be positive")
    if pol.mu_ref is not None and pol.mu_ref <= 0:
        err("reference polymer viscosity must be positive")
    if pol.adsorption is not None:
        if np.any(pol.adsorption.y < 0):
            err("adsorption must be non-negative")
        if pol.adsorption.x[0] < 0:
            err("adsorption table concentrations must be non-negative")
    init = deck.init
    if init.kind == "UNIFORM":
        if init.pressure <= 0:
            err("initial pressure must be positive")
        if not 0.0 <= init.sw <= 1.0:
            err("initial water saturation must lie in [0,1]")
    elif init.pressure <= 0:
        err("datum pressure must be positive")
    if init.cp < 0:
        err("initial polymer concentration must be non-negative")

    names = set()
    for w in deck.wells:
        names.add(w.name)
        if w.rw <= 0:
            err(f"well {w.name}: wellbore radius must be positive")
        if not w.perforations:
            warn(f"well {w.name}: no perforations")
        cells = set()
        for p in w.perforations:
            if not (1 <= p.i <= g.nx and 1 <= p.j <= g.ny and 1 <= p.k <= g.nz):
                err(f"well {w.name}: perforation out of range")
                continue
            if (p.i, p.j, p.k) in cells:
                err(f"well {w.name}: duplicate perforation")
            cells.add((p.i, p.j, p.k))
            if not 0.0 < p.f <= 1.0:
                err(f"well {w.name}: well fraction must lie in (0,1]")
            if p.fh <= 0 or p.gf <= 0:
                err(f"well {w.name}: completion factors must be positive")

    last = -math.inf
    kinds = {w.name: w.kind for w in deck.wells}
    for ev in deck.schedule.events:
        if ev.time < 0:
            err("schedule event time must be non-negative")
        if ev.time <= last:
            err("schedule events must be strictly time-ordered")
        last = ev.time
        touched = set()
        for a in ev.actions:
            if a.kind == "DTMAX":
                if a.value is None or a.value <= 0:
                    err("DTMAX must be positive")
                continue
            if a.well not in names:
                err(f"schedule references undefined well {a.well!r}")
                continue
            if a.well in touched:
                err(f"more than one action for well {a.well!r} in one event")
            touched.add(a.well)
            if a.kind == "CONTROL":
                if kinds[a.well] == "INJ" and a.control not in ("BHP", "WRATE"):
                    err(f"injector {a.well!r} accepts only BHP or WRATE control")
                if a.control != "BHP" and a.value < 0:
                    err(f"well {a.well!r}: rate target must be non-negative")
                if a.conc is not None and kinds[a.well] != "INJ":
                    err(f"well {a.well!r}: polymer concentration only applies to injectors")
            if a.kind == "POLYMER":
                if kinds[a.well] != "INJ":
                    err(f"well {a.well!r}: polymer concentration only applies to injectors")
                elif a.conc < 0:
                    err(f"well {a.well!r}: polymer concentration must be non-negative")
    if deck.schedule.end_time < 0:
        err("end time must be non-negative")
    if deck.schedule.events and last > deck.schedule.end_time:
        warn("schedule events after the end time are ignored")
    return out


# --------------------------------------------------------------------------
# Canonical writer
# --------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def _fmt_array(values: np.ndarray) -> str:
    parts = []
    vals = list(values)
    i = 0
    while i < len(vals):
        j = i
        while j + 1 < len(vals) and vals[j + 1] == vals[i]:
            j += 1
        n = j - i + 1
        parts.append(f"{n}*{_fmt(vals[i])}" if n > 1 else _fmt(vals[i]))
        i = j + 1
    lines = []
    for k in range(0, len(parts), 8):
        lines.append("  " + " ".join(parts[k : k + 8]))
    return "\n".join(lines) + "\n/"


def _table_rows(table: PropertyTable) -> Iterable[str]:
    y = table.y if table.y.ndim > 1 else table.y[:, None]
    for x, row in zip(table.x, y):
        yield "  " + " ".join(_fmt(v) for v in (x, *row))


def serialize_deck(deck: SimulationDeck) -> str:
    """Write ``deck`` in canonical form; ``parse_deck`` of the result is equal to ``deck``."""
    g, r = deck.grid, deck.rock
    out = [f"UNITS {deck.unit_system}", f"GRID {g.nx} {g.ny} {g.nz}"]
    for key, arr in (("DX", g.dx), ("DY", g.dy), ("DZ", g.dz), ("TOPS", g.tops), ("PORO", r.poro),
                     ("PERMX", r.permx), ("PERMY", r.permy), ("PERMZ", r.permz)):
        out.append(key)
        out.append(_fmt_array(arr))
    out.append(f"ROCKC {_fmt(r.compressibility)} {_fmt(r.ref_pressure)} {_fmt(r.density)}")
    for key, p in (("PVTW", deck.water), ("PVTO", deck.oil)):
        vals = [p.surface_density, p.fvf, p.compressibility, p.viscosity]
        if p.ref_pressure is not None:
            vals.append(p.ref_pressure)
        out.append(key + " " + " ".join(_fmt(v) for v in vals))
    out.append("SWOF")
    out.extend(_table_rows(deck.swof))
    out.append("/")
    pol = deck.polymer
    if pol.adsorption is not None:
        out.append("PLYADS")
        out.extend(_table_rows(pol.adsorption))
        out.append("/")
    out.append(f"PLYROCK {_fmt(pol.ipv)} {_fmt(pol.rrf)} {_fmt(pol.ads_max)}")
    if pol.mu_ref is not None:
        out.append(f"PLYVISC {_fmt(pol.omega)} {_fmt(pol.mu_ref)} {_fmt(pol.c_ref)} {pol.mixing}")
    i = deck.init
    if i.kind == "UNIFORM":
        out.append(f"INIT {_fmt(i.pressure)} {_fmt(i.sw)} {_fmt(i.cp)}")
    else:
        out.append(
            f"EQUIL {_fmt(i.datum_depth)} {_fmt(i.pressure)} {_fmt(i.owc_depth)} {_fmt(i.pc_owc)} {_fmt(i.cp)}"
        )
    if deck.wells:
        out.append("WELSPECS")
        for w in deck.wells:
            ref = f" {_fmt(w.ref_depth)}" if w.ref_depth is not None else ""
            out.append(f"  {w.name} {w.kind} {_fmt(w.rw)} {_fmt(w.skin)}{ref}")
        out.append("/")
        out.append("COMPDAT")
        for w in deck.wells:
            for p in w.perforations:
                extra = [p.f, p.fh, p.gf] + ([p.skin] if p.skin is not None else [])
                out.append(f"  {w.name} {p.i} {p.j} {p.k} {p.direction} " + " ".join(_fmt(v) for v in extra))
        out.append("/")
    out.append("SCHEDULE")
    for ev in deck.schedule.events:
        out.append(f"AT {_fmt(ev.time)}")
        for a in ev.actions:
            if a.kind in ("OPEN", "SHUT"):
                out.append(f"  {a.kind} {a.well}")
            elif a.kind == "POLYMER":
                out.append(f"  POLYMER {a.well} {_fmt(a.conc)}")
            elif a.kind == "DTMAX":
                out.append(f"  DTMAX {_fmt(a.value)}")
            else:
                line = f"  CONTROL {a.well} {a.control} {_fmt(a.value)}"
                if a.bound is not None:
                    line += f" {'BHPMAX' if _is_injector(deck, a.well) else 'BHPMIN'} {_fmt(a.bound)}"
                if a.conc is not None:
                    line += f" CONC {_fmt(a.conc)}"
                out.append(line)
    out.append(f"STOP {_fmt(deck.schedule.end_time)}")
    out.append("/")
    opts = [(k, getattr(deck.solver, name)) for k, (name, _) in _SOLVER_KEYS.items()]
    opts = [(k, v) for k, v in opts if v is not None]
    if opts:
        out.append("SOLVER")
        for k, v in opts:
            out.append(f"  {k} {v if isinstance(v, (int, str)) else _fmt(v)}")
        out.append("/")
    out.append("END")
    return "\n".join(out) + "\n"


def _is_injector(deck: SimulationDeck, name: str) -> bool:
    return any(w.name == name and w.kind == "INJ" for w in deck.wells)
