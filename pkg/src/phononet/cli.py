"""CLI for phononet: phononic quantum-network protocol simulations.

Commands: protocol run, sweep, coupledmode fit|predict, rates,
presets list|show, calibrate ms.

Exit codes: 0 success, 1 usage/config error, 2 physics/convergence error,
3 partial sweep failure, 130 interrupted.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

from .config import output_dir, verbose_enabled
from .errors import ConfigError, ConvergenceError, PhononetError
from .units import format_frequency, parse_quantity

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PHYSICS = 2
EXIT_PARTIAL = 3
EXIT_INTERRUPTED = 130


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1, like every other config problem."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _print_json(obj: Any) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _load(config: Optional[str], figure: Optional[str]):
    from .schema import load_config, load_preset

    if figure and config:
        raise ConfigError("figure", "give a config file or --figure, not both")
    if figure:
        return load_preset(figure)
    if not config:
        raise ConfigError("config", "a config file or --figure is required")
    return load_config(config)


def _prefix(cfg, output: Optional[str]) -> Path:
    if output:
        return Path(output)
    configured = cfg.sweep_table.get("output")
    if configured:
        return Path(configured)
    stem = cfg.source.split(":", 1)[1] if cfg.source.startswith("preset:") else Path(cfg.source or "run").stem
    return Path(output_dir()) / stem


# ----------------------------
# Commands
# ----------------------------

def cmd_protocol_run(
    *,
    config: Optional[str],
    figure: Optional[str] = None,
    output: Optional[str] = None,
    scan: Optional[bool] = None,
    mesh_size: Optional[int] = None,
) -> Dict[str, str]:
    """Run one protocol; write <prefix>.json plus traces or scan CSV. Returns the written paths."""
    from .protocols import ProtocolRun
    from .records import RunRecord, record_from_run, write_scan_csv, write_trace_csv
    from .schema import build_spec

    cfg = _load(config, figure)
    spec = build_spec(cfg.raw)
    prefix = _prefix(cfg, output)
    scan = cfg.scan if scan is None else scan
    mesh = mesh_size or cfg.mesh_size
    started = time.perf_counter()
    outputs: Dict[str, str] = {}
    if scan:
        report, verdict = spec.lower_bound(mesh)
        wall = time.perf_counter() - started
        tol = spec.integrator.resolved()
        detail = report.scan_detail
        results = {
            "fidelity": report.value,
            "fidelity_kind": report.kind,
            "leakage": report.leakage,
            "worst_theta": detail.worst_theta,
            "worst_phi": detail.worst_phi,
            "mesh_size": detail.mesh_size,
            "doubled_bound": detail.doubled_bound,
            "mesh_converged": detail.mesh_converged,
            "notes": list(report.notes),
        }
        record = RunRecord(
            kind="run",
            protocol=cfg.protocol,
            config=cfg.raw,
            tolerances={"rtol": tol[0], "atol": tol[1]},
            cutoffs=verdict.to_dict(),
            results=results,
            wall_seconds=wall,
            source=cfg.source,
        )
        outputs["scan_csv"] = str(write_scan_csv(f"{prefix}_scan.csv", detail))
        print(f"{cfg.protocol}: lower bound {report.value:.6f} over {mesh} points (converged={verdict.flag})")
    else:
        run: ProtocolRun = spec.run()
        wall = time.perf_counter() - started
        record = record_from_run(run, cfg.raw, wall, cfg.source)
        outputs["traces_csv"] = str(write_trace_csv(f"{prefix}_traces.csv", run.traces))
        flag = run.cutoff_verdict.flag if run.cutoff_verdict else "n/a"
        print(f"{cfg.protocol}: fidelity {run.fidelity_report.value:.6f} ({run.fidelity_report.kind}, converged={flag})")
    outputs["record_json"] = str(prefix.with_name(prefix.name + ".json"))
    record.outputs = dict(outputs)
    record.write_json(outputs["record_json"])
    for path in outputs.values():
        print(f"wrote {path}")
    return outputs


def cmd_sweep(
    *,
    config: Optional[str],
    figure: Optional[str] = None,
    output: Optional[str] = None,
    workers: Optional[int] = None,
) -> int:
    """Run a sweep; returns the number of failed points."""
    from .records import RunRecord, write_sweep_csv
    from .schema import build_spec, sweep_config
    from .sweep import run_sweep

    cfg = _load(config, figure)
    sweep = sweep_config(cfg)
    prefix = _prefix(cfg, output)
    result = run_sweep(sweep, workers=workers)
    csv_path = write_sweep_csv(f"{prefix}.csv", result.axis_paths, result.rows)
    tol = build_spec(cfg.raw).integrator.resolved()
    record = RunRecord(
        kind="sweep",
        protocol=cfg.protocol,
        config={**cfg.raw, "sweep": cfg.sweep_table},
        tolerances={"rtol": tol[0], "atol": tol[1]},
        cutoffs={"flags": [r.get("converged") for r in result.rows]},
        results=list(result.rows),
        wall_seconds=result.wall_seconds,
        source=cfg.source,
        outputs={"csv": str(csv_path)},
    )
    json_path = record.write_json(f"{prefix}.json")
    print(f"{cfg.protocol}: {len(result.rows)} points, {result.failures} failed")
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return result.failures


def cmd_coupledmode_fit(freqs: List[str]) -> None:
    from .coupledmode import fit_triplet

    values = [parse_quantity(f, "frequency") for f in freqs]
    _print_json(fit_triplet(values).to_dict())


def cmd_coupledmode_predict(*, g: str, delta0: str, f0: Optional[str] = None) -> None:
    from .coupledmode import predict_triplet

    offset = parse_quantity(f0, "frequency") if f0 else 0.0
    lo, mid, hi = predict_triplet(parse_quantity(g, "frequency"), parse_quantity(delta0, "frequency"))
    _print_json({"lambda_minus_hz": lo + offset, "lambda0_hz": mid + offset, "lambda_plus_hz": hi + offset})


RATE_FLAGS = ("nbar", "thermalization", "lame", "raman")


def cmd_rates(args: argparse.Namespace) -> None:
    from .hilbert import bose_occupation
    from .model import MaterialParams, RamanParams, lame_constants, raman_effective_coupling, solve_phonon_wavevector, thermalization_rate

    out: Dict[str, Any] = {}
    omega = parse_quantity(args.omega, "angular")
    if args.nbar:
        T = parse_quantity(_need(args.T, "--T"), "temperature")
        out["nbar"] = bose_occupation(omega, T)
    if args.thermalization:
        T = parse_quantity(_need(args.T, "--T"), "temperature")
        rate = thermalization_rate(T, parse_quantity(args.Q, "dimensionless"))
        out["thermalization_rate_rad_s"] = rate
        out["thermalization_rate"] = format_frequency(rate)
    if args.lame:
        material = MaterialParams(
            E=parse_quantity(args.E, "pressure"),
            nu=parse_quantity(args.nu, "dimensionless"),
            rho=parse_quantity(args.rho, "density"),
        )
        out["lame_pa"] = lame_constants(material).to_dict()
    if args.raman:
        delta_plus = parse_quantity(args.Delta_plus, "angular")
        delta_minus = parse_quantity(args.Delta_minus, "angular") if args.Delta_minus else delta_plus + omega
        params = dict(
            D=parse_quantity(args.D, "energy"),
            k_m=parse_quantity(args.k_m, "wavenumber") if args.k_m else 1.0,
            x_zpf=parse_quantity(args.x_zpf, "length"),
            Omega_plus=parse_quantity(args.Omega_plus, "angular"),
            Omega_minus=parse_quantity(args.Omega_minus, "angular"),
            Delta_plus=delta_plus,
            Delta_minus=delta_minus,
            Gamma_ex=parse_quantity(args.Gamma_ex, "angular"),
            omega_m=omega,
        )
        if args.G_target:
            params["k_m"] = solve_phonon_wavevector(RamanParams(**params), parse_quantity(args.G_target, "angular"))
        elif not args.k_m:
            raise ConfigError("--k-m", "give --k-m or --G-target")
        rates = raman_effective_coupling(RamanParams(**params))
        out["raman"] = {**rates.to_dict(), "k_m": params["k_m"], "G_over_2pi_hz": rates.G / (2 * math.pi)}
    if not out:
        raise ConfigError("rates", "pick at least one of --nbar, --thermalization, --lame, --raman")
    _print_json(out)


def _need(value: Optional[str], flag: str) -> str:
    if value is None:
        raise ConfigError(flag, "is required for this rate")
    return value


def cmd_presets_list() -> None:
    from .schema import list_presets

    for name, description in list_presets():
        print(f"{name}\t{description}")


def cmd_presets_show(name: str) -> None:
    from .schema import load_preset

    cfg = load_preset(name)
    _print_json({"protocol": cfg.protocol, "description": cfg.description, **cfg.raw, "sweep": cfg.sweep_table})


def cmd_calibrate_ms(*, G: str, omega: str, K: int) -> None:
    from .protocols import calibrate_ms_convention

    cal = calibrate_ms_convention(G=parse_quantity(G, "angular"), omega_m=parse_quantity(omega, "angular"), K=K)
    _print_json(
        {
            "convention_factor": cal.factor,
            "threshold": cal.threshold,
            "fidelities": {f"{c:.6f}": f for c, f in cal.fidelities.items()},
        }
    )


# ----------------------------
# Entry point
# ----------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="phononet",
        description="Simulate spin-to-spin transfer and gates in a phononic quantum network.",
        epilog=(
            "protocol run: one protocol from a TOML config (or --figure preset); JSON record + CSV traces.\n"
            "sweep:        Cartesian parameter sweep from the config's [sweep] table; one CSV row per point.\n"
            "\n"
            "Quantities take unit suffixes: 9.1MHz, 0.5K, 80us, 1050GPa.\n"
            "NOTE: negative values must be passed as --Delta0=-1.9MHz (or after --).\n"
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("-v", "--verbose", action="store_true", help="Enable verbose logging (same as PHONONET_VERBOSE=1).")
    sub = p.add_subparsers(dest="cmd", required=True, metavar="COMMAND")

    p_protocol = sub.add_parser("protocol", help="Run a single protocol.")
    protocol_sub = p_protocol.add_subparsers(dest="action", required=True, metavar="ACTION")
    p_run = protocol_sub.add_parser("run", help="Run one protocol and write its record and traces.")
    p_run.add_argument("config", nargs="?", help="TOML run config.")
    p_run.add_argument("--figure", help="Use a shipped preset instead of a config file (see: presets list).")
    p_run.add_argument("--output", help="Output path prefix (default: $PHONONET_OUTPUT_DIR/<config name>).")
    p_run.add_argument("--scan", action="store_true", default=None, help="Bloch-sphere lower-bound scan instead of one run.")
    p_run.add_argument("--mesh", type=int, default=None, help="Scan mesh size (default 64).")

    p_sweep = sub.add_parser("sweep", help="Run the config's parameter sweep.")
    p_sweep.add_argument("config", nargs="?", help="TOML config with a [sweep] table.")
    p_sweep.add_argument("--figure", help="Use a shipped preset instead of a config file.")
    p_sweep.add_argument("--output", help="Output path prefix.")
    p_sweep.add_argument("--workers", type=int, default=None, help="Worker processes. Env: PHONONET_WORKERS.")

    p_cm = sub.add_parser("coupledmode", help="Resonator-waveguide-resonator triplet fits.")
    cm_sub = p_cm.add_subparsers(dest="action", required=True, metavar="ACTION")
    p_fit = cm_sub.add_parser("fit", help="Extract (g, Delta0) from three eigenfrequencies.")
    p_fit.add_argument("freqs", nargs=3, help='Three frequencies, e.g. "1.6737GHz 1.6791GHz 1.6826GHz".')
    p_pred = cm_sub.add_parser("predict", help="Triplet for given (g, Delta0).")
    p_pred.add_argument("--g", required=True, help="Coupling, e.g. 3.1MHz.")
    p_pred.add_argument("--Delta0", required=True, help="Waveguide detuning, e.g. --Delta0=-1.9MHz.")
    p_pred.add_argument("--f0", default=None, help="Resonator frequency to add (absolute output).")

    p_rates = sub.add_parser("rates", help="Derived rates: nbar, thermalization, Lame constants, Raman coupling.")
    p_rates.set_defaults(usage_error=p_rates.error)
    p_rates.add_argument("--nbar", action="store_true", help="Bose occupation at --omega, --T.")
    p_rates.add_argument("--thermalization", action="store_true", help="k_B T / (hbar Q) at --T, --Q.")
    p_rates.add_argument("--lame", action="store_true", help="Lame constants from --E, --nu.")
    p_rates.add_argument("--raman", action="store_true", help="Effective spin-phonon coupling and optical decoherence.")
    p_rates.add_argument("--omega", default="1GHz", help="Mechanical frequency (default 1GHz).")
    p_rates.add_argument("--T", default=None, help="Temperature, e.g. 0.5K.")
    p_rates.add_argument("--Q", default="1e7", help="Mechanical quality factor (default 1e7).")
    p_rates.add_argument("--E", default="1050GPa", help="Young's modulus (default diamond).")
    p_rates.add_argument("--nu", default="0.2", help="Poisson ratio (default diamond).")
    p_rates.add_argument("--rho", default="3539kg/m3", help="Mass density (default diamond).")
    p_rates.add_argument("--D", default="5eV", help="Deformation potential.")
    p_rates.add_argument("--k-m", dest="k_m", default=None, help="Phonon wavevector, 1/m.")
    p_rates.add_argument("--G-target", dest="G_target", default=None, help="Solve k_m for this G (e.g. 0.1MHz).")
    p_rates.add_argument("--x-zpf", dest="x_zpf", default="0.75fm", help="Zero-point fluctuation.")
    p_rates.add_argument("--Omega-plus", dest="Omega_plus", default="0.6GHz", help="Rabi frequency, + leg.")
    p_rates.add_argument("--Omega-minus", dest="Omega_minus", default="0.6GHz", help="Rabi frequency, - leg.")
    p_rates.add_argument("--Delta-plus", dest="Delta_plus", default="3GHz", help="Dipole detuning, + leg.")
    p_rates.add_argument("--Delta-minus", dest="Delta_minus", default=None, help="Dipole detuning, - leg (default Delta+ + omega).")
    p_rates.add_argument("--Gamma-ex", dest="Gamma_ex", default="13MHz", help="Excited-state decay rate.")

    p_presets = sub.add_parser("presets", help="Figure-reproduction presets.")
    presets_sub = p_presets.add_subparsers(dest="action", required=True, metavar="ACTION")
    presets_sub.add_parser("list", help="List shipped presets.")
    p_show = presets_sub.add_parser("show", help="Print a preset's parameters.")
    p_show.add_argument("name")

    p_cal = sub.add_parser("calibrate", help="Convention calibrations.")
    cal_sub = p_cal.add_subparsers(dest="action", required=True, metavar="ACTION")
    p_ms = cal_sub.add_parser("ms", help="Pick the MS drive convention factor that reaches the target state.")
    p_ms.add_argument("--G", default="0.1MHz", help="Drive strength (default 0.1MHz).")
    p_ms.add_argument("--omega", default="1GHz", help="Mode frequency (default 1GHz).")
    p_ms.add_argument("--K", type=int, default=1, help="Phase-space loops (default 1).")
    return p


def main(argv: Optional[List[str]] = None) -> None:
    p = build_parser()
    args = p.parse_args(argv)
    if args.cmd == "rates" and not any(getattr(args, flag) for flag in RATE_FLAGS):
        args.usage_error("pick at least one of " + ", ".join(f"--{flag}" for flag in RATE_FLAGS))

    if args.verbose:
        os.environ["PHONONET_VERBOSE"] = "1"
    _setup_logging(verbose_enabled())

    code = EXIT_OK
    try:
        if args.cmd == "protocol":
            cmd_protocol_run(config=args.config, figure=args.figure, output=args.output, scan=args.scan, mesh_size=args.mesh)
        elif args.cmd == "sweep":
            failures = cmd_sweep(config=args.config, figure=args.figure, output=args.output, workers=args.workers)
            code = EXIT_PARTIAL if failures else EXIT_OK
        elif args.cmd == "coupledmode" and args.action == "fit":
            cmd_coupledmode_fit(args.freqs)
        elif args.cmd == "coupledmode":
            cmd_coupledmode_predict(g=args.g, delta0=args.Delta0, f0=args.f0)
        elif args.cmd == "rates":
            cmd_rates(args)
        elif args.cmd == "presets" and args.action == "list":
            cmd_presets_list()
        elif args.cmd == "presets":
            cmd_presets_show(args.name)
        elif args.cmd == "calibrate":
            cmd_calibrate_ms(G=args.G, omega=args.omega, K=args.K)
        else:
            raise SystemExit(EXIT_CONFIG)
        sys.exit(code)
    except SystemExit:
        raise
    except KeyboardInterrupt:
        sys.exit(EXIT_INTERRUPTED)
    except ConfigError as e:
        print(f"phononet: {e}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)
    except ConvergenceError as e:
        print(f"phononet: {e}", file=sys.stderr)
        print(f"phononet: hint: {e.hint}", file=sys.stderr)
        sys.exit(EXIT_PHYSICS)
    except PhononetError as e:
        print(f"phononet: {e}", file=sys.stderr)
        sys.exit(EXIT_PHYSICS)
    except ValueError as e:
        # bad unit strings and other flag values
        print(f"phononet: {e}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)
    except Exception as e:
        print(f"phononet: {e}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


if __name__ == "__main__":
    main()
