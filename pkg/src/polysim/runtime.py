"""In-process worker team: one worker per partition, halo exchange and reductions.

Workers own disjoint cell sets. Every cross-worker data flow goes through
:meth:`WorkerTeam.halo_exchange` (owner values copied into ghost slots) or
:meth:`WorkerTeam.global_reduce` (partials combined in partition order, so
results never depend on thread scheduling).
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass(eq=False)
class ExchangeChannel:
    """Copy ``src_index`` entries of worker ``src`` into ``dst_index`` of worker ``dst``."""

    src: int
    dst: int
    src_index: np.ndarray
    dst_index: np.ndarray


@dataclass(eq=False)
class PhaseTimer:
    totals: dict = field(default_factory=dict)

    def add(self, name: str, seconds: float) -> None:
        self.totals[name] = self.totals.get(name, 0.0) + seconds

    def section(self, name: str):
        return _Section(self, name)


class _Section:
    def __init__(self, timer: PhaseTimer, name: str):
        self.timer, self.name = timer, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.timer.add(self.name, time.perf_counter() - self.t0)
        return False


class WorkerTeam:
    """Bulk-synchronous team of ``nworkers`` workers.

    ``run`` executes one task per worker and returns when all are done
    (barrier). With more than one worker and ``threads=True`` the tasks run
    on a thread pool; numeric kernels release the GIL.
    """

    def __init__(self, nworkers: int, channels: Sequence[ExchangeChannel] = (), threads: bool = True):
        if nworkers < 1:
            raise ValueError("nworkers must be >= 1")
        self.nworkers = nworkers
        self.channels = list(channels)
        self.timer = PhaseTimer()
        self._pool = ThreadPoolExecutor(max_workers=nworkers) if (threads and nworkers > 1) else None

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    def run(self, fn: Callable, *per_worker_args) -> list:
        """Call ``fn(rank, *args[rank])`` on every worker; results in rank order."""
        ranks = range(self.nworkers)
        if self._pool is None:
            return [fn(r, *(a[r] for a in per_worker_args)) for r in ranks]
        futures = [self._pool.submit(fn, r, *(a[r] for a in per_worker_args)) for r in ranks]
        return [f.result() for f in futures]

    def halo_exchange(self, fields: list, channels: Sequence[ExchangeChannel] | None = None) -> None:
        """Fill ghost entries of per-worker arrays from their owners, in place."""
        t0 = time.perf_counter()
        for ch in self.channels if channels is None else channels:
            fields[ch.dst][ch.dst_index] = fields[ch.src][ch.src_index]
        self.timer.add("exchange", time.perf_counter() - t0)

    def global_reduce(self, values: Sequence, op: str = "sum"):
        """Combine one partial per worker in fixed partition order."""
        if len(values) != self.nworkers:
            raise ValueError("one partial per worker required")
        acc = values[0]
        for v in values[1:]:
            if op == "sum":
                acc = acc + v
            elif op == "max":
                acc = np.maximum(acc, v)
            elif op == "min":
                acc = np.minimum(acc, v)
            else:
                raise ValueError(f"unknown reduction {op!r}")
        return acc


def global_reduce(values: Sequence, op: str = "sum"):
    """Fixed-order reduction of per-worker partials (free-function form)."""
    return WorkerTeam(len(values), threads=False).global_reduce(values, op)


def speedup(t_ref: float, t_n: float) -> float:
    """``s_n = T_ref / T_n``."""
    if t_ref <= 0 or t_n <= 0:
        raise ValueError("elapsed times must be positive")
    return t_ref / t_n
