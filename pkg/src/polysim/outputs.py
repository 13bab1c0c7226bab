"""Result files: well time series, material balance, VTK snapshots, matrices."""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np
import scipy.io

from . import units

WELLS_HEADER = ["time_days", "well", "oil_rate", "water_rate", "liquid_rate", "bhp", "polymer_rate", "cum_oil", "cum_water"]
BALANCE_HEADER = [
    "time_days", "component", "in_place", "injected", "produced", "adsorbed", "relative_error",
]
BENCH_HEADER = ["workers", "elapsed_s", "speedup"]
COMPONENTS = ("oil", "water", "polymer")


def _num(v) -> str:
    return repr(float(v))


def write_wells_csv(path, series, well_names, unit_system: str = "SI") -> None:
    """Rates are surface volumes per day (deck units), positive into the reservoir."""
    qf = units.factor(unit_system, "rate")
    pf = units.factor(unit_system, "pressure")
    mf = units.factor(unit_system, "mass_rate")
    vf = qf * units.DAY  # deck volume in m^3
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(WELLS_HEADER)
        for rec in series.records:
            for i, name in enumerate(well_names):
                qo, qw = rec.oil_rate[i] / qf, rec.water_rate[i] / qf
                w.writerow([
                    _num(rec.time / units.DAY), name, _num(qo), _num(qw), _num(qo + qw),
                    _num(rec.bhp[i] / pf), _num(rec.polymer_rate[i] / mf),
                    _num(rec.cum_oil[i] / vf), _num(rec.cum_water[i] / vf),
                ])


def write_balance_csv(path, series) -> None:
    """Component masses in kg; one row per component and report time."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BALANCE_HEADER)
        for rec in series.records:
            for e, comp in enumerate(COMPONENTS):
                w.writerow([
                    _num(rec.time / units.DAY), comp, _num(rec.in_place[e]), _num(rec.injected[e]),
                    _num(rec.produced[e]), _num(rec.adsorbed if e == 2 else 0.0), _num(rec.balance_error[e]),
                ])


def write_vtk(path, grid, fields: dict[str, np.ndarray], title: str = "polysim") -> None:
    """Legacy VTK structured-points file with cell data."""
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {grid.nx + 1} {grid.ny + 1} {grid.nz + 1}",
        "ORIGIN 0 0 0",
        f"SPACING {grid.dx.mean():.10g} {grid.dy.mean():.10g} {grid.dz.mean():.10g}",
        f"CELL_DATA {grid.ncells}",
    ]
    for name, arr in fields.items():
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(f"{v:.12g}" for v in np.asarray(arr, dtype=float))
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk_dimensions(path) -> tuple[int, int, int]:
    """Cell counts ``(nx, ny, nz)`` of a file written by :func:`write_vtk`."""
    for line in Path(path).read_text().splitlines():
        if line.startswith("DIMENSIONS"):
            a, b, c = (int(t) - 1 for t in line.split()[1:4])
            return a, b, c
    raise ValueError("no DIMENSIONS line")


def dump_linear_system(directory, tag: str, J, b) -> tuple[str, str]:
    os.makedirs(directory, exist_ok=True)
    jp = os.path.join(directory, f"{tag}_J.mtx")
    bp = os.path.join(directory, f"{tag}_b.mtx")
    scipy.io.mmwrite(jp, J)
    scipy.io.mmwrite(bp, np.asarray(b).reshape(-1, 1))
    return jp, bp


def load_linear_system(j_path, b_path=None):
    J = scipy.io.mmread(j_path).tocsr()
    b = np.asarray(scipy.io.mmread(b_path)).ravel() if b_path else np.ones(J.shape[0])
    return J, b


def write_bench_csv(path, rows) -> None:
    """``rows`` of ``(workers, elapsed_s, speedup)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BENCH_HEADER)
        for n, t, s in rows:
            w.writerow([n, _num(float(t)), _num(float(s))])
