"""Run records (JSON) and result tables (CSV).

CSV files start with one ``# phononet ... generated <UTC>`` comment line; the
rest of the file depends only on the config and seed, except the ``wall_ms``
column (left blank when PHONONET_NO_TIMING is set).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from .config import env_flag
from .fidelity import ScanDetail

RESULT_COLUMNS = ("fidelity", "fidelity_kind", "leakage", "waveguide_return", "converged", "wall_ms")
ERROR_COLUMN = "error"
HEADER_PREFIX = "#"


def code_version() -> str:
    try:
        return metadata.version("phononet")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def iso_z(dt: datetime) -> str:
    """UTC ISO-8601 like 2026-02-11T20:36:57Z (no microseconds)."""
    return dt.astimezone(timezone.utc).replace(microsecond=0).isoformat().replace("+00:00", "Z")


def timing_enabled() -> bool:
    return not env_flag("PHONONET_NO_TIMING")


def header_line(now: Optional[datetime] = None) -> str:
    now = now or datetime.now(timezone.utc)
    return f"{HEADER_PREFIX} phononet {code_version()} generated {iso_z(now)}"


def _json_default(o: Any) -> Any:
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, (set, frozenset, tuple)):
        return list(o)
    raise TypeError(f"Object of type {type(o).__name__} is not JSON serializable")


def _finite(o: Any) -> Any:
    """inf/nan floats as strings, so the JSON stays standard."""
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    return o


@dataclass
class RunRecord:
    kind: str  # "run" or "sweep"
    protocol: str
    config: Dict[str, Any]
    tolerances: Dict[str, float]
    cutoffs: Dict[str, Any]
    results: Any
    wall_seconds: float
    source: str = ""
    code_version: str = field(default_factory=code_version)
    created_at: str = field(default_factory=lambda: iso_z(datetime.now(timezone.utc)))
    outputs: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def write_json(self, path: str | Path) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        text = json.dumps(_finite(json.loads(json.dumps(self.to_dict(), default=_json_default))), indent=2)
        p.write_text(text + "\n", encoding="utf-8")
        return p


def record_from_run(run, config: Mapping[str, Any], wall_seconds: float, source: str = "") -> RunRecord:
    """RunRecord for a single ProtocolRun."""
    report = run.result.convergence_report
    verdict = run.cutoff_verdict
    summary = dict(run.summary())
    if run.fidelity_report is not None:
        summary["fidelity_kind"] = run.fidelity_report.kind
        if run.fidelity_report.notes:
            summary["notes"] = list(run.fidelity_report.notes)
    summary["diagnostics"] = dict(run.diagnostics)
    summary["evolution"] = report.to_dict()
    return RunRecord(
        kind="run",
        protocol=run.protocol,
        config=dict(config),
        tolerances={"rtol": report.rtol, "atol": report.atol},
        cutoffs=verdict.to_dict() if verdict is not None else {"base_cutoffs": report.cutoffs, "flag": "n/a"},
        results=summary,
        wall_seconds=wall_seconds,
        source=source,
    )


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_table(path: str | Path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]], now: Optional[datetime] = None) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="", encoding="utf-8") as f:
        f.write(header_line(now) + "\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c)) for c in columns])
    return p


def sweep_columns(axis_paths: Sequence[str]) -> List[str]:
    return [*axis_paths, *RESULT_COLUMNS, ERROR_COLUMN]


def write_sweep_csv(path: str | Path, axis_paths: Sequence[str], rows: Sequence[Mapping[str, Any]]) -> Path:
    if not timing_enabled():
        rows = [{**r, "wall_ms": None} for r in rows]
    return write_table(path, sweep_columns(axis_paths), rows)


def write_trace_csv(path: str | Path, traces: Mapping[str, np.ndarray]) -> Path:
    """One row per time point: t, then one occupation column per mode."""
    columns = list(traces)
    n = len(traces[columns[0]])
    rows = [{c: float(traces[c][i]) for c in columns} for i in range(n)]
    return write_table(path, columns, rows)


def write_scan_csv(path: str | Path, detail: ScanDetail) -> Path:
    return write_table(path, ("theta", "phi", "fidelity"), detail.rows())


def read_table(path: str | Path) -> List[Dict[str, str]]:
    """Rows of a CSV written by write_table, header comment skipped."""
    with Path(path).open(newline="", encoding="utf-8") as f:
        lines = [line for line in f if not line.startswith(HEADER_PREFIX)]
    return list(csv.DictReader(lines))


def table_body(path: str | Path) -> str:
    """File contents without the timestamp line, for determinism checks."""
    text = Path(path).read_text(encoding="utf-8")
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith(HEADER_PREFIX))
