"""Unit tests for phononet.sweep."""
import pytest

from phononet.schema import AxisSpec, load_preset, parse_config, sweep_config
from phononet.sweep import expand_axes, run_point, run_sweep


def _ensemble_sweep(axes):
    cfg = parse_config(
        {
            "protocol": "ensemble_transfer",
            "mechanical": {"g": "1MHz"},
            "run": {"noise": False, "points": 3},
            "sweep": {"axes": axes},
        }
    )
    return sweep_config(cfg)


def test_expand_axes_order():
    points = expand_axes([AxisSpec("a", (1, 2)), AxisSpec("b", ("x", "y", "z"))])
    assert len(points) == 6
    assert points[0] == {"a": 1, "b": "x"}
    assert points[2] == {"a": 1, "b": "z"}
    assert points[3] == {"a": 2, "b": "x"}


def test_expand_axes_empty():
    with pytest.raises(ValueError):
        expand_axes([])


def test_run_sweep_rows_in_grid_order():
    cfg = _ensemble_sweep([{"path": "run.n", "values": [1, 2]}, {"path": "run.G_scale", "values": [1.0, 1.1]}])
    result = run_sweep(cfg, workers=1)
    assert len(result.rows) == 4
    assert result.failures == 0
    assert result.axis_paths == ("run.n", "run.G_scale")
    assert [(r["run.n"], r["run.G_scale"]) for r in result.rows] == [(1, 1.0), (1, 1.1), (2, 1.0), (2, 1.1)]
    perfect = [r for r in result.rows if r["run.G_scale"] == 1.0]
    assert all(r["fidelity"] == pytest.approx(1.0, abs=1e-8) for r in perfect)
    assert all(r["fidelity"] < 0.9999 for r in result.rows if r["run.G_scale"] == 1.1)
    assert all(r["wall_ms"] >= 0 for r in result.rows)


def test_failing_point_keeps_its_row():
    cfg = _ensemble_sweep([{"path": "run.n", "values": [1, 0]}])
    result = run_sweep(cfg, workers=1)
    assert result.failures == 1
    good, bad = result.rows
    assert good["error"] is None
    assert bad["run.n"] == 0
    assert "n must be an integer >= 1" in bad["error"]
    assert "fidelity" not in bad


def test_run_point_directly():
    cfg = _ensemble_sweep([{"path": "run.n", "values": [1]}])
    index, row = run_point((5, {**cfg.fixed, "run": {**cfg.fixed["run"], "n": 1}}, {"run.n": 1}, False, 16))
    assert index == 5
    assert row["converged"] == "n/a"
    assert row["fidelity_kind"] == "swap_target"


def _preset_curve(name, path):
    result = run_sweep(sweep_config(load_preset(name)), workers=1)
    assert result.failures == 0
    return [r[path] for r in result.rows], [r["fidelity"] for r in result.rows]


def test_fig9b_sweep_non_increasing():
    rates, fidelities = _preset_curve("fig9b", "spins.dephasing_rate")
    assert len(rates) == 11
    assert rates == sorted(rates)
    assert fidelities[0] > 0.99
    assert all(b <= a + 1e-9 for a, b in zip(fidelities, fidelities[1:]))
    assert fidelities[-1] < fidelities[0]


@pytest.mark.slow
def test_fig6a_sweep_monotone():
    ratios, bounds = _preset_curve("fig6a", "run.G_over_g")
    assert ratios == [2, 3, 5, 10, 20, 50]
    assert all(b >= a - 1e-9 for a, b in zip(bounds, bounds[1:]))
    assert bounds[-1] > 0.99
