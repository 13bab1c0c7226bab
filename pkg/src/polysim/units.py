"""Unit systems and conversion factors to SI."""

from __future__ import annotations

CP = 1.0e-3
MILLIDARCY = 9.869233e-16
PSI = 6894.757
BAR = 1.0e5
FT = 0.3048
STB = 0.1589873
LBM_PER_CUFT = 16.01846
DAY = 86400.0
LBM = LBM_PER_CUFT * FT**3

GRAVITY = 9.80665

UNIT_SYSTEMS = ("METRIC", "FIELD", "SI")

# quantity kind -> factor multiplying a deck value to obtain SI
_FACTORS = {
    "METRIC": {
        "length": 1.0,
        "permeability": MILLIDARCY,
        "pressure": BAR,
        "compressibility": 1.0 / BAR,
        "viscosity": CP,
        "density": 1.0,
        "time": DAY,
        "rate": 1.0 / DAY,
        "concentration": 1.0,
        "mass_rate": 1.0 / DAY,
    },
    "FIELD": {
        "length": FT,
        "permeability": MILLIDARCY,
        "pressure": PSI,
        "compressibility": 1.0 / PSI,
        "viscosity": CP,
        "density": LBM_PER_CUFT,
        "time": DAY,
        "rate": STB / DAY,
        "concentration": LBM / STB,
        "mass_rate": LBM / DAY,
    },
    "SI": {
        "length": 1.0,
        "permeability": 1.0,
        "pressure": 1.0,
        "compressibility": 1.0,
        "viscosity": 1.0,
        "density": 1.0,
        "time": 1.0,
        "rate": 1.0,
        "concentration": 1.0,
        "mass_rate": 1.0,
    },
}


def factor(system: str, kind: str) -> float:
    """Multiplier converting a value of ``kind`` in ``system`` to SI."""
    if kind == "none":
        return 1.0
    return _FACTORS[system][kind]
