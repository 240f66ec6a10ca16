"""Unit tests for phononet.cli."""
import json

import pytest

from phononet import cli
from phononet.errors import ConvergenceError

ENSEMBLE_TOML = """\
protocol = "ensemble_transfer"

[mechanical]
g = "1MHz"

[run]
noise = false
points = 3
"""


def _main(argv):
    with pytest.raises(SystemExit) as e:
        cli.main(argv)
    return e.value.code


def test_coupledmode_fit(capsys):
    assert _main(["coupledmode", "fit", "1.6737GHz", "1.6791GHz", "1.6826GHz"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["g_hz"] == pytest.approx(3.074e6, rel=1e-3)
    assert out["Delta0_hz"] == pytest.approx(-1.9e6, rel=1e-3)
    assert out["lambda0_hz"] == pytest.approx(1.6791e9)


def test_coupledmode_predict(capsys):
    assert _main(["coupledmode", "predict", "--g", "3.1MHz", "--Delta0=-1.9MHz"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["lambda_minus_hz"] == pytest.approx(-5.436e6, rel=1e-3)
    assert out["lambda0_hz"] == 0.0
    assert out["lambda_plus_hz"] == pytest.approx(3.536e6, rel=1e-3)


def test_coupledmode_fit_rejects_duplicates(capsys):
    assert _main(["coupledmode", "fit", "1GHz", "1GHz", "2GHz"]) == 2
    assert "distinct" in capsys.readouterr().err


def test_rates_lame_and_nbar(capsys):
    assert _main(["rates", "--lame", "--nbar", "--T", "0.5K"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["lame_pa"]["lambda"] == pytest.approx(291.67e9, rel=1e-4)
    assert out["lame_pa"]["mu"] == pytest.approx(437.5e9)
    assert out["nbar"] == pytest.approx(9.927, rel=1e-3)


def test_rates_need_a_flag(capsys):
    assert _main(["rates"]) == 1
    err = capsys.readouterr().err
    assert "usage:" in err and "rates" in err
    assert "pick at least one of --nbar, --thermalization, --lame, --raman" in err


def test_rates_missing_temperature(capsys):
    assert _main(["rates", "--nbar"]) == 1
    assert "--T" in capsys.readouterr().err


def test_bad_unit_is_usage_error(capsys):
    assert _main(["rates", "--nbar", "--T", "0.5 parsecs"]) == 1
    assert "Bad unit" in capsys.readouterr().err


def test_unknown_protocol_config(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text('protocol = "teleport"\n', encoding="utf-8")
    assert _main(["protocol", "run", str(path)]) == 1
    assert "protocol" in capsys.readouterr().err


def test_config_and_figure_conflict(tmp_path, capsys):
    assert _main(["protocol", "run", str(tmp_path / "x.toml"), "--figure", "fig5"]) == 1
    assert "not both" in capsys.readouterr().err


def test_presets_list(capsys):
    assert _main(["presets", "list"]) == 0
    names = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
    assert "fig5" in names and "fig9b" in names


def test_presets_show(capsys):
    assert _main(["presets", "show", "fig8"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["protocol"] == "ensemble_transfer"
    assert out["run"]["occupations"] == {"a1": 1, "b": 1}


def test_protocol_run_writes_outputs(tmp_path, capsys):
    path = tmp_path / "ens.toml"
    path.write_text(ENSEMBLE_TOML, encoding="utf-8")
    prefix = tmp_path / "out" / "ens"
    assert _main(["protocol", "run", str(path), "--output", str(prefix)]) == 0
    assert "fidelity 1.000000" in capsys.readouterr().out
    record = json.loads((tmp_path / "out" / "ens.json").read_text(encoding="utf-8"))
    assert record["kind"] == "run"
    assert record["protocol"] == "ensemble_transfer"
    assert record["results"]["fidelity_kind"] == "swap_target"
    assert record["outputs"]["traces_csv"].endswith("ens_traces.csv")
    assert (tmp_path / "out" / "ens_traces.csv").exists()


def test_output_defaults_to_env_dir(tmp_path, monkeypatch, capsys):
    path = tmp_path / "ens.toml"
    path.write_text(ENSEMBLE_TOML, encoding="utf-8")
    monkeypatch.setenv("PHONONET_OUTPUT_DIR", str(tmp_path / "results"))
    assert _main(["protocol", "run", str(path)]) == 0
    assert (tmp_path / "results" / "ens.json").exists()


def test_sweep_partial_failure_exit_code(tmp_path, capsys):
    path = tmp_path / "sweep.toml"
    path.write_text(ENSEMBLE_TOML + '\n[sweep]\naxes = [{ path = "run.n", values = [1, 0] }]\n', encoding="utf-8")
    assert _main(["sweep", str(path), "--output", str(tmp_path / "sw"), "--workers", "1"]) == 3
    assert "2 points, 1 failed" in capsys.readouterr().out
    lines = (tmp_path / "sw.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# phononet")
    assert lines[1].startswith("run.n,fidelity,")
    assert len(lines) == 4


def test_convergence_error_exit_code(tmp_path, mocker, capsys):
    path = tmp_path / "ens.toml"
    path.write_text(ENSEMBLE_TOML, encoding="utf-8")
    spec = mocker.Mock()
    spec.run.side_effect = ConvergenceError("integrator failed at t=1e-6")
    mocker.patch("phononet.schema.build_spec", return_value=spec)
    assert _main(["protocol", "run", str(path), "--output", str(tmp_path / "x")]) == 2
    err = capsys.readouterr().err
    assert "integrator failed" in err
    assert "hint:" in err


def test_verbose_flag_sets_env(monkeypatch, mocker):
    monkeypatch.setenv("PHONONET_VERBOSE", "0")
    mocker.patch.object(cli, "cmd_presets_list")
    assert _main(["-v", "presets", "list"]) == 0
    assert cli.verbose_enabled() is True
