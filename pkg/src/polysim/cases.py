"""Generators for the sample decks: 1D and 2D polymer floods, the layered
benchmark reservoir, and small verification problems."""

from __future__ import annotations

import numpy as np

# porosity, kx, ky, kz (mD) per layer of the layered benchmark reservoir
LAYERS = np.array([
    [0.17393, 326.4, 980.6, 163.4],
    [0.1694, 445.3, 1335.8, 222.6],
    [0.25714, 148.9, 446.6, 74.4],
    [0.17344, 118.8, 356.4, 59.4],
    [0.1187, 71.2, 213.6, 35.6],
])


def corey_swof(swc: float, sor: float, n: int = 2, rows: int = 11, krw_max: float = 1.0, kro_max: float = 1.0):
    """Corey relative permeabilities with zero capillary pressure."""
    sw = np.linspace(swc, 1.0 - sor, rows)
    se = (sw - swc) / (1.0 - swc - sor)
    krw = krw_max * se**n
    kro = kro_max * (1.0 - se) ** n
    table = np.column_stack([sw, krw, kro, np.zeros(rows)])
    if sor > 0:
        table = np.vstack([table, [1.0, krw_max, 0.0, 0.0]])
    if swc > 0:
        table = np.vstack([[0.0, 0.0, kro_max, 0.0], table])
    return table


def _rows(table) -> list[str]:
    return ["  " + " ".join(f"{v:.10g}" for v in row) for row in np.atleast_2d(table)]


def _array(values) -> str:
    values = np.asarray(values, dtype=float).ravel()
    out, i = [], 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[j + 1] == values[i]:
            j += 1
        n = j - i + 1
        out.append(f"{n}*{values[i]:.10g}" if n > 1 else f"{values[i]:.10g}")
        i = j + 1
    return " ".join(out)


def _solver(opts: dict | None) -> list[str]:
    if not opts:
        return []
    return ["SOLVER"] + [f"  {k} {v}" for k, v in opts.items()] + ["/"]


def table1_deck(solver: dict | None = None, mu_poly: float = 5.0) -> str:
    """One-dimensional polymer flood, 15 cells of 100 m (METRIC).

    The tighter Newton tolerance keeps the weakly constrained pressure level
    identical across worker counts to well within 1e-5.
    """
    solver = {"NEWTON_TOL": 1e-7, **(solver or {})}
    lines = [
        "# 1D polymer flood: 15 x 1 x 1, 100 m cells",
        "UNITS METRIC",
        "GRID 15 1 1",
        "DX 100", "DY 100", "DZ 100", "TOPS 1000",
        "PORO 0.5", "PERMX 100",
        "ROCKC 0 200 2650",
        "PVTW 1025.18 1.0 3.03e-6 0.5",
        "PVTO 832.96 1.0 1.0e-5 0.5",
        "SWOF", *_rows(corey_swof(0.2, 0.2)), "/",
        "PLYADS", *_rows([[0, 0], [1, 0.0012], [2, 0.0022], [3, 0.0029], [4, 0.0033], [6, 0.0035], [8, 0.0035]]), "/",
        "PLYROCK 0.15 2.67 0.0035",
        f"PLYVISC 1.0 {mu_poly:g} 6 LINEAR",
        "INIT 200 0.4 0.1",
        "WELSPECS", "  INJ INJ 0.1 0", "  PROD PROD 0.1 0", "/",
        "COMPDAT", "  INJ 1 1 1 Z", "  PROD 15 1 1 Z", "/",
        "SCHEDULE",
        "AT 0",
        "  CONTROL INJ WRATE 1000 CONC 0",
        "  CONTROL PROD LRATE 1000 BHPMIN 20",
        "AT 300", "  POLYMER INJ 6",
        "AT 800", "  POLYMER INJ 0",
        "STOP 1800",
        "/",
        *_solver(solver),
        "END",
    ]
    return "\n".join(lines) + "\n"


def table2_deck(solver: dict | None = None, mu_poly: float = 5.0) -> str:
    """Two-dimensional 10 x 10 polymer flood, 75 ft cells (FIELD)."""
    lines = [
        "# 2D polymer flood: 10 x 10 x 1, 75 ft cells",
        "UNITS FIELD",
        "GRID 10 10 1",
        "DX 75", "DY 75", "DZ 75", "TOPS 5000",
        "PORO 0.2", "PERMX 50",
        "ROCKC 0 4000 165",
        "PVTW 64 1.0 3.03e-6 0.5",
        "PVTO 52 1.0 1.0e-5 2",
        "SWOF", *_rows(corey_swof(0.0, 0.2)), "/",
        "PLYADS", *_rows([[0, 0], [10, 0.0008], [25, 0.0015], [50, 0.002], [80, 0.002]]), "/",
        "PLYROCK 0.1 2.0 0.002",
        f"PLYVISC 1.0 {mu_poly:g} 50 LINEAR",
        "INIT 4000 0 0",
        "WELSPECS", "  INJ INJ 0.25 0", "  PROD PROD 0.25 0", "/",
        "COMPDAT", "  INJ 1 1 1 Z", "  PROD 10 10 1 Z", "/",
        "SCHEDULE",
        "AT 0",
        "  CONTROL INJ WRATE 200 BHPMAX 200000 CONC 50",
        "  CONTROL PROD BHP 3999",
        "AT 200", "  POLYMER INJ 0",
        "STOP 1700",
        "/",
        *_solver(solver),
        "END",
    ]
    return "\n".join(lines) + "\n"


def layered_deck(
    nx: int = 95,
    ny: int = 192,
    nz: int = 5,
    dx: float = 100.0,
    dy: float = 100.0,
    dz: float = 20.0,
    end_time: float = 4340.0,
    polymer_start: float = 3980.0,
    injection_rate: float = 5000.0,
    solver: dict | None = None,
    mu_poly: float = 5.0,
) -> str:
    """Layered reservoir: four vertical corner injectors, horizontal centre producer (FIELD).

    Layer properties repeat downward when ``nz`` exceeds the number of
    tabulated layers (each tabulated layer spans ``nz / 5`` model layers).
    """
    layer_of = np.minimum((np.arange(nz) * len(LAYERS)) // nz, len(LAYERS) - 1)
    per_layer = nx * ny
    poro = np.repeat(LAYERS[layer_of, 0], per_layer)
    kx = np.repeat(LAYERS[layer_of, 1], per_layer)
    ky = np.repeat(LAYERS[layer_of, 2], per_layer)
    kz = np.repeat(LAYERS[layer_of, 3], per_layer)
    top = 6100.0
    bottom = top + nz * dz
    corners = [(1, 1), (nx, 1), (1, ny), (nx, ny)]
    welspecs = [f"  I{n + 1} INJ 0.25 0" for n in range(4)] + ["  P1 PROD 0.25 0"]
    compdat = []
    for n, (i, j) in enumerate(corners):
        compdat += [f"  I{n + 1} {i} {j} {k} Z" for k in range(1, nz + 1)]
    kp = max(1, (nz + 1) // 2)
    jc = max(1, (ny + 1) // 2)
    i0, i1 = max(1, nx // 4 + 1), max(1, (3 * nx) // 4)
    compdat += [f"  P1 {i} {jc} {kp} X" for i in range(i0, i1 + 1)]
    sched = ["AT 0"]
    sched += [f"  CONTROL I{n + 1} WRATE {injection_rate:g} BHPMAX 8000" for n in range(4)]
    sched += [f"  CONTROL P1 LRATE {4 * injection_rate:g} BHPMIN 1000"]
    if polymer_start < end_time:
        sched += [f"AT {polymer_start:g}"] + [f"  POLYMER I{n + 1} 2" for n in range(4)]
    sched += [f"STOP {end_time:g}"]
    lines = [
        f"# layered reservoir {nx} x {ny} x {nz}",
        "UNITS FIELD",
        f"GRID {nx} {ny} {nz}",
        f"DX {dx:g}", f"DY {dy:g}", f"DZ {dz:g}", f"TOPS {top:g}",
        "PORO", _array(poro), "/",
        "PERMX", _array(kx), "/",
        "PERMY", _array(ky), "/",
        "PERMZ", _array(kz), "/",
        "ROCKC 3e-6 4000 165",
        "PVTW 64 1.0 3.03e-6 0.5",
        "PVTO 52 1.0 1.0e-5 2",
        "SWOF", *_rows(corey_swof(0.2, 0.2)), "/",
        "PLYADS", *_rows([[0, 0], [1, 0.0005], [2, 0.0008], [4, 0.0008]]), "/",
        "PLYROCK 0.1 1.5 0.0008",
        f"PLYVISC 1.0 {mu_poly:g} 2 LINEAR",
        f"EQUIL 6150 4000 {bottom:g} 0 0",
        "WELSPECS", *welspecs, "/",
        "COMPDAT", *compdat, "/",
        "SCHEDULE", *sched, "/",
        *_solver(solver),
        "END",
    ]
    return "\n".join(lines) + "\n"


def buckley_leverett_deck(n: int = 200, length: float = 200.0, rate: float = 1e-5, swc: float = 0.2,
                          sor: float = 0.2, mu_w: float = 0.5, mu_o: float = 1.0, end_time: float = 1.2e6,
                          solver: dict | None = None) -> str:
    """Incompressible 1D waterflood without polymer or capillary pressure (SI units).

    The defaults inject 0.3 pore volumes (PV 40 m^3) with about 10 bar across the core.
    """
    lines = [
        "UNITS SI",
        f"GRID {n} 1 1",
        f"DX {length / n:.10g}", "DY 1", "DZ 1",
        "PORO 0.2", "PERMX 1e-12",
        "ROCKC 0 1e7 2650",
        f"PVTW 1000 1.0 0 {mu_w * 1e-3:g}",
        f"PVTO 800 1.0 0 {mu_o * 1e-3:g}",
        "SWOF", *_rows(corey_swof(swc, sor, rows=41)), "/",
        f"INIT 1e7 {swc:g} 0",
        "WELSPECS", "  INJ INJ 0.1 0", "  PROD PROD 0.1 0", "/",
        "COMPDAT", "  INJ 1 1 1 X", f"  PROD {n} 1 1 X", "/",
        "SCHEDULE", "AT 0", f"  CONTROL INJ WRATE {rate:.10g}", "  CONTROL PROD BHP 1e7",
        f"STOP {end_time:.10g}", "/",
        *_solver(solver),
        "END",
    ]
    return "\n".join(lines) + "\n"


def tracer_deck(ipv: float, n: int = 100, rate: float = 1e-5, end_time: float = 1e6, conc: float = 1.0,
                solver: dict | None = None) -> str:
    """Water-filled 1D column with a passive polymer tracer (SI units).

    The defaults inject 0.4 pore volumes with about 5 bar across the column.
    """
    lines = [
        "UNITS SI",
        f"GRID {n} 1 1",
        "DX 1", "DY 1", "DZ 1",
        "PORO 0.25", "PERMX 1e-12",
        "ROCKC 0 1e7 2650",
        "PVTW 1000 1.0 0 5e-4",
        "PVTO 800 1.0 0 1e-3",
        "SWOF", *_rows([[0.0, 0.0, 1.0, 0.0], [1.0, 1.0, 0.0, 0.0]]), "/",
        f"PLYROCK {ipv:g} 1.0 1.0",
        f"PLYVISC 1.0 5e-4 {conc:g} LINEAR",
        "INIT 1e7 1.0 0",
        "WELSPECS", "  INJ INJ 0.1 0", "  PROD PROD 0.1 0", "/",
        "COMPDAT", "  INJ 1 1 1 X", f"  PROD {n} 1 1 X", "/",
        "SCHEDULE", "AT 0", f"  CONTROL INJ WRATE {rate:.10g} CONC {conc:g}", "  CONTROL PROD BHP 1e7",
        f"STOP {end_time:.10g}", "/",
        *_solver(solver),
        "END",
    ]
    return "\n".join(lines) + "\n"


GENERATORS = {
    "table1": table1_deck,
    "table2": table2_deck,
    "layered": layered_deck,
    "buckley-leverett": buckley_leverett_deck,
}
