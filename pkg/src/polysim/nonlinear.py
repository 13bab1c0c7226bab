"""Inexact Newton with adaptive forcing terms, and the timestep controller.

The outer loop solves ``J x = b`` with ``b = -R`` only to the relative
accuracy ``eta_l``. The forcing term follows

    eta_l = clamp(gamma (||b^l|| / ||b^{l-1}||)^beta, eta_min, eta_max)

with ``gamma = 0.5`` and ``beta = (1 + sqrt(5)) / 2``; the first linear
solve uses ``eta_max``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

from .props import NonPhysicalState

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass
class NewtonConfig:
    tol: float = 1e-6
    max_iterations: int = 12
    gamma: float = 0.5
    beta: float = GOLDEN
    eta_min: float = 0.01
    eta_max: float = 0.1
    mode: str = "INEXACT"  # or "STANDARD"
    eta_fixed: float = 1e-8
    mb_tol: float | None = 1e-7

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("Newton tolerance must be positive")
        if not self.eta_min < self.eta_max:
            raise ValueError("eta_min must be smaller than eta_max")
        if not 0 < self.gamma <= 1:
            raise ValueError("forcing gamma must lie in (0, 1]")
        if self.mode not in ("INEXACT", "STANDARD"):
            raise ValueError(f"unknown Newton mode {self.mode!r}")


@dataclass
class NewtonReport:
    iterations: int = 0
    norm: float = math.inf
    converged: bool = False
    etas: list = field(default_factory=list)
    linear_iterations: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    reason: str = ""
    halved: bool = False

    @property
    def total_linear_iterations(self) -> int:
        return int(sum(self.linear_iterations))


class NonlinearProblem(Protocol):
    """What the Newton driver needs from a discretized model."""

    def evaluate(self, state: Any, jacobian: bool) -> tuple[np.ndarray, Any]:
        """Residual ``R`` (and Jacobian when asked) at ``state``."""

    def scale(self) -> np.ndarray:
        """Row scaling applied to residual and Jacobian."""

    def balance_ok(self, residual: np.ndarray) -> bool:
        """Extra convergence test (material balance); True when unused."""

    def linear_solve(self, J, b: np.ndarray, eta: float) -> tuple[np.ndarray, Any]:
        """Approximate ``J x = b``; returns ``(x, stats)`` with ``stats.iterations``."""

    def update(self, state: Any, dx: np.ndarray, factor: float) -> Any:
        """New state ``state + factor dx`` (with damping)."""


def forcing_term(norm: float, norm_prev: float, config: NewtonConfig | None = None) -> float:
    cfg = config or NewtonConfig()
    if norm_prev <= 0.0:
        return cfg.eta_max
    eta = cfg.gamma * (norm / norm_prev) ** cfg.beta
    return float(min(max(eta, cfg.eta_min), cfg.eta_max))


def newton_solve(problem: NonlinearProblem, state, config: NewtonConfig | None = None):
    """Run Newton iterations from ``state``; returns ``(state, NewtonReport)``.

    Non-physical intermediate states and exhausted iteration budgets come
    back as ``converged=False`` so the caller can cut the timestep.
    """
    cfg = config or NewtonConfig()
    rep = NewtonReport()
    D = problem.scale()
    increases = 0
    prev_state = None
    last_dx = None
    norm_prev = None
    try:
        while True:
            R, _ = problem.evaluate(state, False)
            b = -D * R
            norm = float(np.linalg.norm(b))
            rep.norms.append(norm)
            rep.norm = norm
            if not math.isfinite(norm):
                rep.reason = "non-finite residual"
                return state, rep
            if norm < cfg.tol and problem.balance_ok(R):
                rep.converged = True
                return state, rep
            if norm_prev is not None and norm > norm_prev:
                increases += 1
            else:
                increases = 0
            if increases >= 2:
                if rep.halved:
                    rep.reason = "residual increased twice after halving"
                    return state, rep
                rep.halved = True
                increases = 0
                state = problem.update(prev_state, last_dx, 0.5)
                norm_prev = None
                continue
            if rep.iterations >= cfg.max_iterations:
                rep.reason = "maximum Newton iterations reached"
                return state, rep
            if cfg.mode == "STANDARD":
                eta = cfg.eta_fixed
            elif norm_prev is None:
                eta = cfg.eta_max
            else:
                eta = forcing_term(norm, norm_prev, cfg)
            _, J = problem.evaluate(state, True)
            Js = J.multiply(D[:, None]).tocsr() if hasattr(J, "multiply") else D[:, None] * J
            x, stats = problem.linear_solve(Js, b, eta)
            rep.etas.append(eta)
            rep.linear_iterations.append(int(stats.iterations))
            rep.iterations += 1
            prev_state, last_dx = state, x
            state = problem.update(state, x, 1.0)
            norm_prev = norm
    except NonPhysicalState as exc:
        rep.reason = f"non-physical state: {exc}"
        rep.converged = False
        return state, rep


# --------------------------------------------------------------------------
# Timestep control
# --------------------------------------------------------------------------


class TimestepError(RuntimeError):
    pass


@dataclass
class TimestepController:
    dt_init: float
    dt_max: float
    dt_min: float
    growth: float = 2.0
    cut: float = 0.5
    dt: float = 0.0  # nominal step, before event clipping

    def __post_init__(self):
        if not 0 < self.dt_min <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_max")
        if self.dt <= 0.0:
            self.dt = min(max(self.dt_init, self.dt_min), self.dt_max)

    def propose(self, t: float, t_next_event: float) -> float:
        """Step from ``t`` that never crosses ``t_next_event``."""
        return min(self.dt, self.dt_max, t_next_event - t)

    def success(self, dt_taken: float | None = None) -> None:
        self.dt = min(self.dt * self.growth, self.dt_max)

    def failure(self, dt_tried: float) -> None:
        self.dt = dt_tried * self.cut
        if self.dt < self.dt_min * (1.0 - 1e-12):
            raise TimestepError(f"timestep {self.dt:g} s fell below the minimum {self.dt_min:g} s")


def select_timestep(ctrl: TimestepController, converged: bool | None, t: float, t_next_event: float,
                    dt_last: float | None = None) -> float:
    """Next step size after an outcome (``None`` for the first step)."""
    if converged is not None:
        if converged:
            ctrl.success(dt_last if dt_last is not None else ctrl.dt)
        else:
            ctrl.failure(dt_last if dt_last is not None else ctrl.dt)
    return ctrl.propose(t, t_next_event)
