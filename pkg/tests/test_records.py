"""Unit tests for phononet.records."""
import json
import math
from datetime import datetime, timezone

import numpy as np
import pytest

from phononet.records import (
    RunRecord,
    _cell,
    header_line,
    iso_z,
    read_table,
    sweep_columns,
    table_body,
    write_sweep_csv,
    write_table,
    write_trace_csv,
)

FIXED_NOW = datetime(2026, 2, 11, 20, 36, 57, 123456, tzinfo=timezone.utc)


@pytest.mark.parametrize(
    "value, expected",
    [
        (None, ""),
        (True, "true"),
        (np.bool_(False), "false"),
        (0.1 + 0.2, "0.3"),
        (np.float64(1 / 3), "0.333333333333"),
        (np.int64(7), "7"),
        ("n/a", "n/a"),
    ],
)
def test_cell(value, expected):
    assert _cell(value) == expected


def test_iso_z_and_header():
    assert iso_z(FIXED_NOW) == "2026-02-11T20:36:57Z"
    line = header_line(FIXED_NOW)
    assert line.startswith("# phononet ")
    assert line.endswith("generated 2026-02-11T20:36:57Z")


def test_write_and_read_table(tmp_path):
    path = write_table(tmp_path / "sub" / "t.csv", ["a", "b"], [{"a": 1, "b": 0.5}, {"a": 2}], now=FIXED_NOW)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("#")
    assert lines[1] == "a,b"
    assert read_table(path) == [{"a": "1", "b": "0.5"}, {"a": "2", "b": ""}]


def test_sweep_csv_without_timing(tmp_path, monkeypatch):
    monkeypatch.setenv("PHONONET_NO_TIMING", "1")
    rows = [{"run.n": 1, "fidelity": 0.99, "fidelity_kind": "swap_target", "converged": "n/a", "wall_ms": 12.5}]
    path = write_sweep_csv(tmp_path / "s.csv", ["run.n"], rows)
    table = read_table(path)
    assert list(table[0]) == sweep_columns(["run.n"])
    assert table[0]["wall_ms"] == ""
    assert table[0]["error"] == ""
    assert rows[0]["wall_ms"] == 12.5


def test_table_body_ignores_timestamp(tmp_path):
    rows = [{"x": 1.0}]
    a = write_table(tmp_path / "a.csv", ["x"], rows, now=FIXED_NOW)
    b = write_table(tmp_path / "b.csv", ["x"], rows, now=datetime(2030, 1, 1, tzinfo=timezone.utc))
    assert a.read_text() != b.read_text()
    assert table_body(a) == table_body(b) == "x\n1\n"


def test_trace_csv(tmp_path):
    traces = {"t": np.array([0.0, 1e-6]), "S1": np.array([1.0, 0.25])}
    rows = read_table(write_trace_csv(tmp_path / "trace.csv", traces))
    assert rows == [{"t": "0", "S1": "1"}, {"t": "1e-06", "S1": "0.25"}]


def test_run_record_json(tmp_path):
    record = RunRecord(
        kind="run",
        protocol="ms_gate",
        config={"protocol": "ms_gate"},
        tolerances={"rtol": 1e-8, "atol": 1e-10},
        cutoffs={"base_cutoffs": {"m": 10}, "flag": "n/a"},
        results={"fidelity": np.float64(0.999), "T2": math.inf, "amp": 1 + 2j, "grid": np.arange(2)},
        wall_seconds=0.5,
    )
    data = json.loads(record.write_json(tmp_path / "out" / "run.json").read_text(encoding="utf-8"))
    assert data["results"]["fidelity"] == pytest.approx(0.999)
    assert data["results"]["T2"] == "inf"
    assert data["results"]["amp"] == [1.0, 2.0]
    assert data["results"]["grid"] == [0, 1]
    assert data["created_at"].endswith("Z")
