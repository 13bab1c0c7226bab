"""Command line interface: ``polysim simulate|bench|check|solve-mm|generate``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import cases, outputs
from .deck import DeckError, load_deck, validate
from .linsolve import AMGConfig, LinearSolver, PreconditionerConfig
from .runtime import speedup
from .simulator import ConvergenceFailure, RunOptions, simulate

EXIT_OK = 0
EXIT_DECK = 2
EXIT_CONVERGENCE = 3

log = logging.getLogger("polysim")


def _load_checked(path):
    deck = load_deck(path)
    errors = [d for d in validate(deck) if d.severity == "error"]
    if errors:
        raise DeckError("; ".join(d.message for d in errors))
    return deck


def cmd_simulate(args) -> int:
    deck = _load_checked(args.deck)
    opts = RunOptions(
        nworkers=args.workers,
        output_dir=args.out,
        vtk=args.vtk,
        dump_linear_systems=args.dump_linear_systems,
        precond=args.precond,
        newton_mode=args.newton_mode,
        max_steps=args.max_steps,
    )
    rep = simulate(deck, opts)
    print(
        f"done: {len(rep.steps)} steps, {rep.newton_iterations} Newton and {rep.linear_iterations} linear "
        f"iterations, {rep.cuts} cuts, {rep.wall_time:.2f} s, max balance error {rep.max_balance_error:.2e}"
    )
    for note in rep.warnings:
        print(f"warning: {note}")
    return EXIT_OK


def cmd_bench(args) -> int:
    deck = _load_checked(args.deck)
    counts = [int(x) for x in args.workers.split(",") if x.strip()]
    rows = []
    t_ref = None
    for n in counts:
        rep = simulate(deck, RunOptions(nworkers=n, max_steps=args.max_steps))
        t_ref = rep.wall_time if t_ref is None else t_ref
        s = speedup(t_ref, rep.wall_time)
        rows.append((n, rep.wall_time, s))
        print(f"workers={n} elapsed={rep.wall_time:.3f}s speedup={s:.3f}")
    os.makedirs(args.out, exist_ok=True)
    outputs.write_bench_csv(os.path.join(args.out, "bench.csv"), rows)
    return EXIT_OK


def cmd_check(args) -> int:
    deck = load_deck(args.deck)
    diags = validate(deck)
    for d in diags:
        print(f"{d.severity}: {d.message}")
    if any(d.severity == "error" for d in diags):
        return EXIT_DECK
    print(f"ok: {deck.grid.nx}x{deck.grid.ny}x{deck.grid.nz} grid, {len(deck.wells)} wells")
    return EXIT_OK


def cmd_solve_mm(args) -> int:
    J, b = outputs.load_linear_system(args.matrix, args.rhs)
    n = J.shape[0]
    ncells = args.ncells if args.ncells is not None else n // 3
    cfg = PreconditionerConfig(kind=args.precond.upper(), overlap=args.overlap,
                               amg=AMGConfig(smoother=args.smoother.upper()))
    offsets = np.array([0, n])
    solver = LinearSolver(offsets, 3 * np.arange(ncells), config=cfg)
    t0 = time.perf_counter()
    x, stats = solver.solve(J, b, args.eta)
    rel = np.linalg.norm(b - J @ x) / max(np.linalg.norm(b), 1e-300)
    print(f"iterations={stats.iterations} converged={stats.converged} residual={rel:.3e} "
          f"setup={stats.setup_time:.3f}s total={time.perf_counter() - t0:.3f}s")
    return EXIT_OK if stats.converged else EXIT_CONVERGENCE


def cmd_generate(args) -> int:
    if args.case == "layered":
        text = cases.layered_deck(args.nx or 95, args.ny or 192, args.nz or 5,
                                  end_time=args.end_time if args.end_time is not None else 4340.0)
    elif args.case == "buckley-leverett":
        text = cases.buckley_leverett_deck(args.nx or 200)
    else:
        text = cases.GENERATORS[args.case]()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polysim", description="Fully implicit oil/water/polymer simulator")
    ap.add_argument("-v", "--verbose", action="store_true", help="log every timestep")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a deck")
    p.add_argument("deck")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="out")
    p.add_argument("--vtk", action="store_true", help="write VTK snapshots every step")
    p.add_argument("--dump-linear-systems", action="store_true", help="write every linear system (MatrixMarket)")
    p.add_argument("--precond", choices=["CPR", "ILU0", "NONE", "cpr", "ilu0", "none"])
    p.add_argument("--newton-mode", choices=["INEXACT", "STANDARD", "inexact", "standard"])
    p.add_argument("--max-steps", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="time a deck over several worker counts")
    p.add_argument("deck")
    p.add_argument("--workers", default="1,2,4,8")
    p.add_argument("--out", default="bench")
    p.add_argument("--max-steps", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("check", help="parse and validate a deck")
    p.add_argument("deck")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("solve-mm", help="solve a MatrixMarket system offline")
    p.add_argument("matrix")
    p.add_argument("rhs", nargs="?")
    p.add_argument("--eta", type=float, default=1e-6)
    p.add_argument("--precond", default="CPR")
    p.add_argument("--overlap", type=int, default=1)
    p.add_argument("--smoother", default="JACOBI")
    p.add_argument("--ncells", type=int, help="cell count (default: rows // 3)")
    p.set_defaults(func=cmd_solve_mm)

    p = sub.add_parser("generate", help="write a sample deck")
    p.add_argument("case", choices=sorted(cases.GENERATORS))
    p.add_argument("--out")
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--nz", type=int)
    p.add_argument("--end-time", type=float)
    p.set_defaults(func=cmd_generate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except DeckError as exc:
        print(f"deck error: {exc}", file=sys.stderr)
        return EXIT_DECK
    except FileNotFoundError as exc:
        print(f"deck error: {exc}", file=sys.stderr)
        return EXIT_DECK
    except ConvergenceFailure as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
