"""Restarted, right-preconditioned GMRES.

Inner products go through a caller-supplied ``dots`` function so that a
distributed run can combine per-worker partial sums in a fixed order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class SolveStats:
    iterations: int = 0
    residual: float = 0.0  # final true relative residual ||b - Ax|| / ||b||
    converged: bool = True
    setup_time: float = 0.0
    apply_time: float = 0.0
    restarts: int = 0


def serial_dots(V: np.ndarray, w: np.ndarray) -> np.ndarray:
    return V @ w


def gmres(
    matvec: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    tol: float,
    precond: Callable[[np.ndarray], np.ndarray] | None = None,
    restart: int = 30,
    maxiter: int = 200,
    dots: Callable[[np.ndarray, np.ndarray], np.ndarray] = serial_dots,
) -> tuple[np.ndarray, SolveStats]:
    """Solve ``A x = b`` until ``||b - A x|| <= tol ||b||`` (true residual).

    ``dots(V, w)`` must return ``V @ w`` for a stack of row vectors ``V``.
    On failure the iterate with the smallest true residual is returned with
    ``converged=False``.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = b.size
    M = precond if precond is not None else (lambda v: v)
    stats = SolveStats()

    def norm(v):
        return float(np.sqrt(max(dots(v[None, :], v)[0], 0.0)))

    bnorm = norm(b)
    x = np.zeros(n)
    if bnorm == 0.0:
        stats.apply_time = time.perf_counter() - t0
        return x, stats
    target = tol * bnorm
    best_x, best_res = x.copy(), bnorm
    r = b.copy()
    beta = bnorm
    total = 0
    while True:
        m = min(restart, maxiter - total)
        if m <= 0:
            break
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k_done = 0
        for k in range(m):
            Z[k] = M(V[k])
            w = matvec(Z[k])
            # classical Gram-Schmidt, applied twice
            h = dots(V[: k + 1], w)
            w = w - h @ V[: k + 1]
            h2 = dots(V[: k + 1], w)
            w = w - h2 @ V[: k + 1]
            h = h + h2
            hn = norm(w)
            H[: k + 1, k] = h
            H[k + 1, k] = hn
            for i in range(k):
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = t
            denom = np.hypot(H[k, k], H[k + 1, k])
            if denom == 0.0:
                cs[k], sn[k] = 1.0, 0.0
            else:
                cs[k], sn[k] = H[k, k] / denom, H[k + 1, k] / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            total += 1
            k_done = k + 1
            if abs(g[k + 1]) <= target or hn == 0.0:
                break
            V[k + 1] = w / hn
        y = _back_substitute(H[:k_done, :k_done], g[:k_done])
        x = x + y @ Z[:k_done]
        r = b - matvec(x)
        beta = norm(r)
        if beta < best_res:
            best_res, best_x = beta, x.copy()
        if beta <= target:
            stats.iterations = total
            stats.residual = beta / bnorm
            stats.apply_time = time.perf_counter() - t0
            return x, stats
        if total >= maxiter:
            break
        stats.restarts += 1
    stats.iterations = total
    stats.residual = best_res / bnorm
    stats.converged = False
    stats.apply_time = time.perf_counter() - t0
    return best_x, stats


def _back_substitute(R: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = g.size
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        d = R[i, i]
        y[i] = (g[i] - R[i, i + 1 :] @ y[i + 1 :]) / d if d != 0.0 else 0.0
    return y
