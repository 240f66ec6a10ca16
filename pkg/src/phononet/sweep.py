"""Parameter sweeps: Cartesian grid over config paths, fanned out to a process pool.

Rows come back in grid order (first axis slowest) whatever the completion
order. A failing point keeps its row with the error string filled in.
"""
from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass
from multiprocessing import Pool
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import default_workers
from .errors import PhononetError
from .protocols import evaluate
from .records import ERROR_COLUMN
from .schema import AxisSpec, SweepConfig, build_spec, set_path

log = logging.getLogger(__name__)

Job = Tuple[int, Dict[str, Any], Dict[str, Any], bool, int]


def expand_axes(axes: Sequence[AxisSpec]) -> List[Dict[str, Any]]:
    """Grid points as {path: value}, first axis varying slowest."""
    if not axes:
        raise ValueError("a sweep needs at least one axis")
    paths = [a.path for a in axes]
    return [dict(zip(paths, combo)) for combo in itertools.product(*(a.values for a in axes))]


def _jobs(cfg: SweepConfig) -> List[Job]:
    jobs: List[Job] = []
    for i, point in enumerate(expand_axes(cfg.axes)):
        raw = cfg.fixed
        for path, value in point.items():
            raw = set_path(raw, path, value)
        jobs.append((i, raw, point, cfg.scan, cfg.mesh_size))
    return jobs


def run_point(job: Job) -> Tuple[int, Dict[str, Any]]:
    """Evaluate one grid point; module-level so the pool can pickle it."""
    index, raw, assignments, scan, mesh_size = job
    started = time.perf_counter()
    try:
        row = evaluate(build_spec(raw), scan=scan, mesh_size=mesh_size)
        row[ERROR_COLUMN] = None
    except (PhononetError, ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        log.warning("[sweep] point %d %s failed: %s", index, assignments, e)
        row = {ERROR_COLUMN: f"{type(e).__name__}: {e}"}
    row.update(assignments)
    row["wall_ms"] = (time.perf_counter() - started) * 1e3
    return index, row


@dataclass(frozen=True)
class SweepResult:
    config: SweepConfig
    rows: Tuple[Dict[str, Any], ...]
    wall_seconds: float

    @property
    def failures(self) -> int:
        return sum(1 for r in self.rows if r.get(ERROR_COLUMN))

    @property
    def axis_paths(self) -> Tuple[str, ...]:
        return tuple(a.path for a in self.config.axes)


def run_sweep(cfg: SweepConfig, workers: Optional[int] = None) -> SweepResult:
    started = time.perf_counter()
    jobs = _jobs(cfg)
    workers = workers or cfg.workers or default_workers()
    workers = max(1, min(workers, len(jobs)))
    log.info("[sweep] %s: %d points on %d worker(s)", cfg.protocol, len(jobs), workers)
    if workers == 1:
        results = [run_point(job) for job in jobs]
    else:
        with Pool(processes=workers) as pool:
            results = pool.map(run_point, jobs, chunksize=1)
    rows = tuple(row for _, row in sorted(results, key=lambda r: r[0]))
    out = SweepResult(cfg, rows, time.perf_counter() - started)
    if out.failures:
        log.warning("[sweep] %d of %d points failed", out.failures, len(rows))
    return out
