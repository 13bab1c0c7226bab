from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from polysim.cases import corey_swof, table1_deck
from polysim.deck import convert_to_si, parse_deck

# wall-clock deadlines are meaningless on a shared single-core box
settings.register_profile("polysim", deadline=None)
settings.load_profile("polysim")


def small_deck_text(
    nx: int = 3,
    ny: int = 3,
    nz: int = 2,
    units: str = "SI",
    perm=None,
    poro=None,
    wells: bool = True,
    extra: str = "",
) -> str:
    """Small heterogeneous SI deck with an injector and a producer in opposite corners."""
    n = nx * ny * nz
    rng = np.random.default_rng(7)
    perm = rng.uniform(5e-14, 5e-13, n) if perm is None else np.broadcast_to(perm, (n,))
    poro = rng.uniform(0.15, 0.3, n) if poro is None else np.broadcast_to(poro, (n,))
    swof = corey_swof(0.2, 0.2)
    swof[:, 3] = np.linspace(2e4, 0.0, swof.shape[0])
    lines = [
        f"UNITS {units}",
        f"GRID {nx} {ny} {nz}",
        "DX 10", "DY 12", "DZ 4", "TOPS 1000",
        "PORO " + " ".join(f"{v:.10g}" for v in poro),
        "PERMX " + " ".join(f"{v:.10g}" for v in perm),
        "PERMY " + " ".join(f"{0.7 * v:.10g}" for v in perm),
        "PERMZ " + " ".join(f"{0.1 * v:.10g}" for v in perm),
        "ROCKC 1e-9 2e7 2650",
        "PVTW 1025 1.0 4e-10 5e-4",
        "PVTO 850 1.0 1e-9 2e-3",
        "SWOF",
        *["  " + " ".join(f"{v:.10g}" for v in row) for row in swof],
        "/",
        "PLYADS", "  0 0", "  1 0.00002", "  3 0.00003", "/",
        "PLYROCK 0.1 2.0 0.00003",
        "PLYVISC 0.8 0.005 3 LINEAR",
        "INIT 2e7 0.3 0.5",
    ]
    if wells:
        lines += [
            "WELSPECS", "  I INJ 0.1 0", "  P PROD 0.1 0", "/",
            "COMPDAT", "  I 1 1 1 Z", f"  P {nx} {ny} {nz} Z", "/",
            "SCHEDULE", "AT 0",
            "  CONTROL I WRATE 1e-3 CONC 1",
            "  CONTROL P BHP 1.8e7",
            "STOP 8.64e5", "/",
        ]
    lines += [extra, "END"]
    return "\n".join(lines) + "\n"


@pytest.fixture(scope="session")
def table1_text() -> str:
    return table1_deck()


@pytest.fixture(scope="session")
def table1_si(table1_text):
    return convert_to_si(parse_deck(table1_text))


@pytest.fixture()
def small_si():
    return convert_to_si(parse_deck(small_deck_text()))


def open_wells(system, deck) -> None:
    """Apply the schedule's first event to the wells of ``system``."""
    from polysim.wells import apply_action

    names = [w.name for w in system.wells]
    if deck.schedule.events:
        for a in deck.schedule.events[0].actions:
            if a.well is not None:
                apply_action(system.wells[names.index(a.well)], a)


def natural_vector(state) -> np.ndarray:
    return np.concatenate([np.stack([state.p, state.s, state.c], axis=1).ravel(), state.pb])


def state_from_vector(template, x):
    n = template.p.size
    out = template.copy()
    cells = x[: 3 * n].reshape(n, 3)
    out.p, out.s, out.c = cells[:, 0].copy(), cells[:, 1].copy(), cells[:, 2].copy()
    out.pb = x[3 * n :].copy()
    return out


def assemble_natural(system, state, masses_prev, dt, jacobian=True):
    """Residual and Jacobian of ``system`` at ``state`` in natural unknown order."""
    local = system.scatter(state)
    out = system.assemble(local, masses_prev, dt, jacobian)
    perm = system.layout.natural_permutation()
    J = out.jacobian[perm][:, perm] if jacobian else None
    return out.residual[perm], J, out


def fd_jacobian(system, state, masses_prev, dt, steps):
    """Central-difference Jacobian with per-unknown steps ``steps`` (natural order)."""
    x0 = natural_vector(state)
    cols = []
    for k in range(x0.size):
        e = np.zeros_like(x0)
        e[k] = steps[k]
        rp, _, _ = assemble_natural(system, state_from_vector(state, x0 + e), masses_prev, dt, False)
        rm, _, _ = assemble_natural(system, state_from_vector(state, x0 - e), masses_prev, dt, False)
        cols.append((rp - rm) / (2 * steps[k]))
    return np.stack(cols, axis=1)


# one PASS/FAIL line per acceptance criterion, repeated after the test summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
