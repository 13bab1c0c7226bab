"""Time loop: schedule events, Newton steps, control switching and reporting."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import outputs, units
from .deck import SimulationDeck, convert_to_si, load_deck
from .linsolve import AMGConfig, LinearSolver, PreconditionerConfig
from .nonlinear import NewtonConfig, TimestepController, TimestepError, newton_solve
from .partition import write_partition_csv
from .runtime import PhaseTimer, speedup
from .system import Assembled, DiscreteSystem, State
from .wells import apply_action, switch_constraint

log = logging.getLogger("polysim")

MAX_SWITCH_RESOLVES = 8


class ConvergenceFailure(RuntimeError):
    pass


@dataclass
class RunOptions:
    nworkers: int = 1
    threads: bool = True
    output_dir: str | None = None
    vtk: bool = False
    dump_linear_systems: bool = False
    newton_mode: str | None = None  # overrides the deck
    precond: str | None = None  # overrides the deck
    single_subdomain: bool = False
    max_steps: int | None = None
    end_time: float | None = None  # seconds, overrides the deck
    record_systems: int = 0  # keep the first n scaled linear systems in memory
    on_step: Callable | None = None
    report_units: str | None = None  # unit system of written files; defaults to the deck's


@dataclass
class Record:
    time: float
    oil_rate: np.ndarray  # surface m^3/s per well, positive into the reservoir
    water_rate: np.ndarray
    polymer_rate: np.ndarray  # kg/s
    bhp: np.ndarray
    cum_oil: np.ndarray  # surface m^3, magnitudes
    cum_water: np.ndarray
    in_place: np.ndarray  # kg per component
    injected: np.ndarray  # kg per component this run
    produced: np.ndarray
    adsorbed: float
    balance_error: np.ndarray  # relative, this step


@dataclass
class TimeSeries:
    well_names: list
    records: list = field(default_factory=list)

    def column(self, name: str, well: int | None = None) -> np.ndarray:
        vals = [getattr(r, name) for r in self.records]
        if well is not None:
            return np.array([v[well] for v in vals])
        return np.array(vals)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.records])


@dataclass
class StepInfo:
    step: int
    time: float
    dt: float
    newton_iterations: int
    linear_iterations: int
    norm: float
    etas: list


@dataclass
class RunReport:
    series: TimeSeries
    final_state: State | None = None
    wall_time: float = 0.0
    phase_times: dict = field(default_factory=dict)
    newton_iterations: int = 0
    linear_iterations: int = 0
    steps: list = field(default_factory=list)
    cuts: int = 0
    etas: list = field(default_factory=list)
    max_balance_error: float = 0.0
    systems: list = field(default_factory=list)
    speedup: float | None = None
    nworkers: int = 1
    warnings: list = field(default_factory=list)

    def set_reference(self, t_ref: float) -> None:
        self.speedup = speedup(t_ref, self.wall_time)


def _default(v, d):
    return d if v is None else v


def solver_configs(deck: SimulationDeck, opts: RunOptions):
    """Newton, timestep and linear-solver settings from an SI deck and overrides."""
    s = deck.solver
    newton = NewtonConfig(
        tol=_default(s.newton_tol, 1e-6),
        max_iterations=_default(s.newton_max_iter, 12),
        gamma=_default(s.forcing_gamma, 0.5),
        beta=_default(s.forcing_beta, NewtonConfig().beta),
        eta_min=_default(s.eta_min, 0.01),
        eta_max=_default(s.eta_max, 0.1),
        mode=(opts.newton_mode or _default(s.newton_mode, "INEXACT")).upper(),
        eta_fixed=_default(s.eta_fixed, 1e-8),
        mb_tol=_default(s.mb_tol, 1e-7),
    )
    day = units.DAY
    ts = TimestepController(
        dt_init=_default(s.dt_init, day),
        dt_max=_default(s.dt_max, 30 * day),
        dt_min=_default(s.dt_min, 1e-3 * day),
        growth=_default(s.dt_growth, 2.0),
        cut=_default(s.dt_cut, 0.5),
    )
    sweeps = _default(s.amg_sweeps, 1)
    amg = AMGConfig(
        theta=_default(s.amg_theta, 0.25),
        max_levels=_default(s.amg_max_levels, 10),
        max_coarse=_default(s.amg_max_coarse, 100),
        smoother=_default(s.amg_smoother, "JACOBI").upper(),
        omega=_default(s.amg_omega, 0.8),
        presweeps=sweeps,
        postsweeps=sweeps,
    )
    lin = PreconditionerConfig(
        kind=(opts.precond or _default(s.precond, "CPR")).upper(),
        overlap=_default(s.ras_overlap, 1),
        single_subdomain=opts.single_subdomain,
        amg=amg,
        restart=_default(s.gmres_restart, 30),
        maxiter=_default(s.gmres_max_iter, 200),
    )
    return newton, ts, lin


class StepProblem:
    """One backward-Euler step seen as a nonlinear problem for the Newton driver."""

    def __init__(self, system: DiscreteSystem, solver: LinearSolver, masses_prev, dt: float, mb_tol, timer,
                 on_linear=None):
        self.system = system
        self.solver = solver
        self.masses_prev = masses_prev
        self.dt = dt
        self.mb_tol = mb_tol
        self.timer = timer
        self.on_linear = on_linear
        self._cache: tuple | None = None
        self._scale = system.row_scale(dt)

    def assembled(self, state) -> Assembled:
        if self._cache is None or self._cache[0] is not state:
            self._cache = (state, self.system.assemble(state, self.masses_prev, self.dt, True))
        return self._cache[1]

    def evaluate(self, state, jacobian: bool):
        a = self.assembled(state)
        return a.residual, (a.jacobian if jacobian else None)

    def scale(self) -> np.ndarray:
        return self._scale

    def balance_ok(self, residual) -> bool:
        if self.mb_tol is None:
            return True
        a = self._cache[1]
        return bool(self.system.balance_error(residual, a.masses, self.dt).max() <= self.mb_tol)

    def linear_solve(self, J, b, eta):
        t0 = time.perf_counter()
        x, stats = self.solver.solve(J, b, eta)
        # "solve" excludes the preconditioner setup so phases do not overlap
        self.timer.add("solve", time.perf_counter() - t0 - stats.setup_time)
        self.timer.add("setup", stats.setup_time)
        if self.on_linear is not None:
            self.on_linear(J, b, eta, stats)
        return x, stats

    def update(self, state, dx, factor):
        return self.system.update(state, dx, factor)


def _event_table(deck: SimulationDeck):
    events = sorted(deck.schedule.events, key=lambda e: e.time)
    return events


def _apply_events(system: DiscreteSystem, state: State, actions, ctrl: TimestepController) -> list[int]:
    """Apply schedule actions; returns the wells whose ``P_b`` needs a fresh guess."""
    names = {w.name: i for i, w in enumerate(system.wells)}
    touched = []
    for a in actions:
        if a.kind == "DTMAX":
            ctrl.dt_max = a.value
            ctrl.dt = min(ctrl.dt, ctrl.dt_max)
            continue
        w = names[a.well]
        apply_action(system.wells[w], a)
        if a.kind in ("OPEN", "SHUT", "CONTROL"):
            touched.append(w)
    return sorted(set(touched))


def simulate(deck: SimulationDeck, opts: RunOptions | None = None) -> RunReport:
    """Run ``deck`` (any unit system) and return the report; writes files if asked."""
    opts = opts or RunOptions()
    t_start = time.perf_counter()
    if opts.report_units is None:
        opts.report_units = deck.unit_system
    deck = convert_to_si(deck)
    system = DiscreteSystem(deck, opts.nworkers, opts.threads)
    try:
        return _run(system, deck, opts, t_start)
    finally:
        system.close()


def _run(system: DiscreteSystem, deck: SimulationDeck, opts: RunOptions, t_start: float) -> RunReport:
    newton_cfg, ctrl, lin_cfg = solver_configs(deck, opts)
    layout = system.layout
    solver = LinearSolver(layout.offsets, layout.cell_dof, layout.natural_permutation(), system.team, lin_cfg)
    timer: PhaseTimer = system.team.timer
    names = [w.name for w in system.wells]
    series = TimeSeries(names)
    report = RunReport(series=series, nworkers=system.nworkers)
    end_time = deck.schedule.end_time if opts.end_time is None else opts.end_time
    events = _event_table(deck)
    nwell = len(system.wells)
    cum_o, cum_w = np.zeros(nwell), np.zeros(nwell)
    injected, produced = np.zeros(3), np.zeros(3)
    perm = layout.natural_permutation()
    if opts.output_dir:
        os.makedirs(opts.output_dir, exist_ok=True)
        write_partition_csv(os.path.join(opts.output_dir, "partition.csv"), system.partition)

    state = system.initial_state()
    t = 0.0
    ev_i = 0
    step = 0
    perf_rates = None
    linear_count = [0]

    def on_linear(J, b, eta, stats):
        if len(report.systems) < opts.record_systems:
            report.systems.append((J.copy(), b.copy()))
        if opts.dump_linear_systems and opts.output_dir:
            # natural ordering: cells (3 unknowns each) first, then wells
            Jn = J[perm][:, perm]
            outputs.dump_linear_system(os.path.join(opts.output_dir, "linear_systems"),
                                       f"sys{linear_count[0]:05d}", Jn, b[perm])
        linear_count[0] += 1

    def apply_due(t_now):
        nonlocal ev_i
        touched = []
        while ev_i < len(events) and events[ev_i].time <= t_now * (1 + 1e-12) + 1e-9:
            touched += _apply_events(system, state, events[ev_i].actions, ctrl)
            ev_i += 1
        if touched:
            system.update_well_gradients(state, perf_rates)
            system.initialize_bhp(state, sorted(set(touched)))

    apply_due(t)
    system.update_well_gradients(state, None)
    system.initialize_bhp(state, range(nwell))
    local = system.scatter(state)
    masses_prev = system.masses(local)

    while t < end_time * (1 - 1e-12) and (opts.max_steps is None or step < opts.max_steps):
        t_stop = min(events[ev_i].time if ev_i < len(events) else end_time, end_time)
        dt = ctrl.propose(t, t_stop)
        for w in system.wells:
            w.switches = 0
        resolves = 0
        while True:
            problem = StepProblem(system, solver, masses_prev, dt, newton_cfg.mb_tol, timer, on_linear)
            new_local, rep = newton_solve(problem, local, newton_cfg)
            report.etas.extend(rep.etas)
            report.newton_iterations += rep.iterations
            report.linear_iterations += rep.total_linear_iterations
            if not rep.converged:
                report.cuts += 1
                log.info("step %d: Newton failed at dt=%.6g d (%s); cutting", step + 1, dt / units.DAY, rep.reason)
                try:
                    ctrl.failure(dt)
                except TimestepError as exc:
                    report.wall_time = time.perf_counter() - t_start
                    report.phase_times = dict(timer.totals)
                    report.final_state = system.gather(local)
                    _flush(report, system, deck, opts)
                    raise ConvergenceFailure(str(exc)) from exc
                dt = ctrl.propose(t, t_stop)
                continue
            asm = problem.assembled(new_local)
            pb = system.gather(new_local).pb
            qo, qw, qp = system.well_rates(asm.perf_rates)
            changed = False
            for w, well in enumerate(system.wells):
                if switch_constraint(well, pb[w], qo[w], qw[w]):
                    changed = True
            if changed and resolves < MAX_SWITCH_RESOLVES:
                resolves += 1
                log.info("step %d: well control switched, re-solving", step + 1)
                continue
            break

        step += 1
        t_new = t + dt
        if abs(t_new - t_stop) <= 1e-9 * max(1.0, abs(t_stop)):
            t_new = t_stop
        t = t_new
        ctrl.success(dt)
        local = new_local
        system.advance_history(local)
        masses_new = asm.masses
        # material balance of the step
        well_mass = np.zeros((nwell, 3))
        np.add.at(well_mass, layout.perfs.well, asm.perf_rates)
        inj = np.where(well_mass > 0, well_mass, 0.0).sum(axis=0) * dt
        prod = -np.where(well_mass < 0, well_mass, 0.0).sum(axis=0) * dt
        m_new = system.team.global_reduce([m.sum(axis=0) for m in masses_new])
        m_old = system.team.global_reduce([m.sum(axis=0) for m in masses_prev])
        err = np.abs((m_new - m_old) - (inj - prod)) / np.maximum(m_new, 1e-300)
        injected += inj
        produced += prod
        cum_o += np.abs(qo) * dt
        cum_w += np.abs(qw) * dt
        state = system.gather(local)
        perf_rates = asm.perf_rates
        adsorbed = _adsorbed_mass(system, state)
        series.records.append(Record(t, qo, qw, qp, state.pb.copy(), cum_o.copy(), cum_w.copy(), m_new,
                                     injected.copy(), produced.copy(), adsorbed, err))
        report.max_balance_error = max(report.max_balance_error, float(err.max()))
        info = StepInfo(step, t, dt, rep.iterations, rep.total_linear_iterations, rep.norm, list(rep.etas))
        report.steps.append(info)
        log.info("step %d, t=%.6g d, dt=%.6g d, newton_iters=%d, linear_iters_total=%d, |b|_final=%.3e",
                 step, t / units.DAY, dt / units.DAY, rep.iterations, rep.total_linear_iterations, rep.norm)
        if opts.vtk and opts.output_dir:
            _snapshot(system, state, opts.output_dir, step)
        if opts.on_step is not None:
            opts.on_step(report, state)
        masses_prev = masses_new
        # events at the new time, then fresh well gradients for the next step
        before = ev_i
        apply_due(t)
        if ev_i == before:
            system.update_well_gradients(state, perf_rates)
        local = system.scatter(state)
        masses_prev = system.masses(local)

    report.final_state = system.gather(local)
    report.wall_time = time.perf_counter() - t_start
    report.phase_times = dict(timer.totals)
    for w in system.wells:
        report.warnings.extend(w.notes)
    _flush(report, system, deck, opts)
    return report


def _adsorbed_mass(system: DiscreteSystem, state: State) -> float:
    m = system.model
    phi = m.porosity(state.p)[0]
    return float(np.sum((1.0 - phi) * m.rock_density * m.adsorption(state.c)[0] * system.grid.volume))


def _snapshot(system: DiscreteSystem, state: State, out: str, step: int) -> None:
    outputs.write_vtk(
        os.path.join(out, f"state_{step:05d}.vtk"),
        system.grid,
        {"P_o": state.p, "S_w": state.s, "C_p": state.c},
    )


def _flush(report: RunReport, system: DiscreteSystem, deck: SimulationDeck, opts: RunOptions) -> None:
    if not opts.output_dir:
        return
    outputs.write_wells_csv(os.path.join(opts.output_dir, "wells.csv"), report.series, report.series.well_names,
                            opts.report_units or "SI")
    outputs.write_balance_csv(os.path.join(opts.output_dir, "balance.csv"), report.series)


def run_simulation(deck_path, nworkers: int = 1, output_dir: str | None = None, **kwargs) -> RunReport:
    """Load, run and write outputs of a deck file."""
    deck = load_deck(deck_path)
    opts = RunOptions(nworkers=nworkers, output_dir=output_dir, **kwargs)
    return simulate(deck, opts)
