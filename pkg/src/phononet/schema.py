"""TOML run/sweep configuration: validation and conversion into protocol specs.

A config is a small tree:

    protocol = "triple_swap"
    [mechanical]  g, delta1, delta2 (or delta), omega_m, Q_m, T
    [spins]       G1, G2 (or G), T1, T2_star (or dephasing_rate), kind
    [ms]          K, G, Delta_MS, convention_factor, sign
    [run]         epsilon, noise, thermal, initial_spin, cutoffs, occupations,
                  n, G_over_g, G_scale, model, nbar, cutoff, points,
                  points_per_segment, mesh_size, scan, strict
    [integrator]  rtol, atol
    [convergence] step, tolerance, max_dim, enabled
    [sweep]       axes, workers, seed, output, scan, mesh_size

Quantities take unit suffixes ("9.1MHz", "0.5K", "80us"); bare numbers are SI.
Every violation raises ConfigError naming the dotted key.
"""
from __future__ import annotations

import copy
import math
import tomllib
from importlib import resources
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from .errors import ConfigError, ParameterError
from .fidelity import DEFAULT_MESH
from .model import BOSONIZED, SINGLE_SPIN, MechanicalParams, MSParams, SpinParams
from .protocols import (
    ENSEMBLE_TRANSFER,
    EXCITED,
    MS_GATE,
    NETWORK_MODEL,
    PROTOCOLS,
    TRIPLE_SWAP,
    CutoffPolicy,
    EnsembleTransferSpec,
    IntegratorSettings,
    MSGateSpec,
    TripleSwapSpec,
)
from .units import parse_quantity

# section -> key -> quantity kind (str) or python type
SCHEMA: Dict[str, Dict[str, Any]] = {
    "mechanical": {
        "g": "angular",
        "delta1": "angular",
        "delta2": "angular",
        "delta": "angular",
        "omega_m": "angular",
        "Q_m": "dimensionless",
        "T": "temperature",
    },
    "spins": {
        "G1": "angular",
        "G2": "angular",
        "G": "angular",
        "T1": "time",
        "T2_star": "time",
        "dephasing_rate": "rate",
        "kind": str,
    },
    "ms": {
        "K": int,
        "G": "angular",
        "Delta_MS": "angular",
        "convention_factor": "dimensionless",
        "sign": int,
    },
    "run": {
        "epsilon": "dimensionless",
        "noise": bool,
        "thermal": bool,
        "initial_spin": list,
        "cutoffs": dict,
        "occupations": dict,
        "n": int,
        "G_over_g": "dimensionless",
        "G_scale": "dimensionless",
        "model": str,
        "nbar": "dimensionless",
        "cutoff": int,
        "points": int,
        "points_per_segment": int,
        "mesh_size": int,
        "scan": bool,
        "strict": bool,
    },
    "integrator": {"rtol": "dimensionless", "atol": "dimensionless"},
    "convergence": {"step": int, "tolerance": "dimensionless", "max_dim": int, "enabled": bool},
}
TOP_LEVEL = {"protocol", "description", "figure", "sweep"} | set(SCHEMA)
SWEEP_KEYS = {"axes", "workers", "seed", "output", "scan", "mesh_size"}

NAMED_SPINS: Dict[str, Tuple[float, float]] = {
    "0": (0.0, 0.0),
    "1": EXCITED,
    "+x": (math.pi / 2, 0.0),
    "+y": (math.pi / 2, math.pi / 2),
}


@dataclass(frozen=True)
class AxisSpec:
    path: str
    values: Tuple[Any, ...]


@dataclass(frozen=True)
class SweepConfig:
    protocol: str
    fixed: Dict[str, Any]
    axes: Tuple[AxisSpec, ...]
    output: Optional[str] = None
    workers: Optional[int] = None
    seed: int = 0
    scan: bool = False
    mesh_size: int = DEFAULT_MESH


@dataclass(frozen=True)
class RunConfig:
    protocol: str
    raw: Dict[str, Any]
    description: str = ""
    source: str = ""
    sweep_table: Dict[str, Any] = field(default_factory=dict)

    @property
    def scan(self) -> bool:
        return bool(self.raw.get("run", {}).get("scan", False))

    @property
    def mesh_size(self) -> int:
        return int(self.raw.get("run", {}).get("mesh_size", DEFAULT_MESH))


# ----------------------------
# Loading
# ----------------------------

def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        with p.open("rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(str(p), "file not found") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(str(p), f"invalid TOML: {e}") from e
    return parse_config(data, source=str(p))


def parse_config(data: Mapping[str, Any], source: str = "") -> RunConfig:
    unknown = sorted(set(data) - TOP_LEVEL)
    if unknown:
        raise ConfigError(unknown[0], f"unknown top-level key (expected one of {sorted(TOP_LEVEL)})")
    protocol = data.get("protocol")
    if protocol not in PROTOCOLS:
        raise ConfigError("protocol", f"must be one of {list(PROTOCOLS)}, got {protocol!r}")
    raw = {k: copy.deepcopy(v) for k, v in data.items() if k != "sweep"}
    for section in SCHEMA:
        table = raw.get(section, {})
        if not isinstance(table, dict):
            raise ConfigError(section, "must be a table")
        for key in table:
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}", f"unknown key (expected one of {sorted(SCHEMA[section])})")
    sweep = data.get("sweep", {})
    if not isinstance(sweep, dict):
        raise ConfigError("sweep", "must be a table")
    cfg = RunConfig(protocol, raw, str(data.get("description", "")), source, dict(sweep))
    build_spec(cfg.raw)  # fail early
    return cfg


def quantity_kind(path: str) -> Any:
    """Kind or type of a dotted parameter path; ConfigError if it does not resolve."""
    parts = path.split(".")
    if len(parts) < 2 or parts[0] not in SCHEMA or parts[1] not in SCHEMA[parts[0]]:
        raise ConfigError(path, "does not name a parameter")
    kind = SCHEMA[parts[0]][parts[1]]
    if len(parts) > 2:
        if kind is not dict or len(parts) != 3:
            raise ConfigError(path, "does not name a parameter")
        return int
    return kind


def set_path(raw: Mapping[str, Any], path: str, value: Any) -> Dict[str, Any]:
    """Copy of ``raw`` with the dotted ``path`` set to ``value``."""
    quantity_kind(path)
    out = copy.deepcopy(dict(raw))
    node = out
    parts = path.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return out


# ----------------------------
# Field conversion
# ----------------------------

def _value(raw: Mapping[str, Any], section: str, key: str, default: Any = None) -> Any:
    table = raw.get(section, {})
    if key not in table:
        return default
    v = table[key]
    kind = SCHEMA[section][key]
    path = f"{section}.{key}"
    if isinstance(kind, str):
        try:
            return parse_quantity(v, kind)
        except ValueError as e:
            raise ConfigError(path, str(e)) from None
    if kind is bool:
        if not isinstance(v, bool):
            raise ConfigError(path, f"expected true/false, got {v!r}")
        return v
    if kind is int:
        return _as_int(path, v)
    if kind is str:
        if not isinstance(v, str):
            raise ConfigError(path, f"expected a string, got {v!r}")
        return v
    if not isinstance(v, kind):
        raise ConfigError(path, f"expected a {kind.__name__}, got {v!r}")
    return v


def _as_int(path: str, v: Any) -> int:
    if isinstance(v, bool):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if isinstance(v, int):
        return v
    if isinstance(v, float) and v.is_integer():
        return int(v)
    raise ConfigError(path, f"expected an integer, got {v!r}")


def _int_map(raw: Mapping[str, Any], key: str) -> Dict[str, int]:
    table = _value(raw, "run", key, {}) or {}
    return {label: _as_int(f"run.{key}.{label}", v) for label, v in table.items()}


def _initial_spin(raw: Mapping[str, Any]) -> Tuple[float, float]:
    v = raw.get("run", {}).get("initial_spin")
    if v is None:
        return EXCITED
    if isinstance(v, str):
        if v not in NAMED_SPINS:
            raise ConfigError("run.initial_spin", f"unknown name {v!r} (use {sorted(NAMED_SPINS)} or [theta, phi])")
        return NAMED_SPINS[v]
    if not isinstance(v, list) or len(v) != 2 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise ConfigError("run.initial_spin", f"expected [theta, phi] in radians, got {v!r}")
    return float(v[0]), float(v[1])


def _require(value: Any, path: str) -> Any:
    if value is None:
        raise ConfigError(path, "is required")
    return value


def _mechanical(raw: Mapping[str, Any], protocol: str) -> MechanicalParams:
    g = _value(raw, "mechanical", "g")
    if g is None and protocol == MS_GATE:
        g = _value(raw, "ms", "G") or _value(raw, "spins", "G")
    g = _require(g, "mechanical.g")
    delta = _value(raw, "mechanical", "delta")
    kwargs: Dict[str, float] = {"g": g}
    for key in ("delta1", "delta2"):
        v = _value(raw, "mechanical", key, delta)
        if v is not None:
            kwargs[key] = v
    for key in ("omega_m", "Q_m", "T"):
        v = _value(raw, "mechanical", key)
        if v is not None:
            kwargs[key] = v
    return MechanicalParams(**kwargs)


def _spins(raw: Mapping[str, Any], mech: MechanicalParams, protocol: str) -> SpinParams:
    G = _value(raw, "spins", "G")
    ratio = _value(raw, "run", "G_over_g")
    if ratio is not None and protocol == TRIPLE_SWAP:
        G = ratio * mech.g
    if protocol == MS_GATE and G is None:
        G = _value(raw, "ms", "G")
    G1 = _value(raw, "spins", "G1", G)
    G2 = _value(raw, "spins", "G2", G)
    if protocol == ENSEMBLE_TRANSFER:
        # the ensemble coupling comes from [run] n / G_over_g; G1, G2 are set per run
        G1 = G1 if G1 is not None else 0.0
        G2 = G2 if G2 is not None else 0.0
    G1 = _require(G1, "spins.G1")
    G2 = _require(G2, "spins.G2")
    T2 = _value(raw, "spins", "T2_star")
    rate = _value(raw, "spins", "dephasing_rate")
    if rate is not None:
        if T2 is not None:
            raise ConfigError("spins.dephasing_rate", "give T2_star or dephasing_rate, not both")
        T2 = math.inf if rate == 0 else 1.0 / rate
    default_kind = BOSONIZED if protocol == ENSEMBLE_TRANSFER else SINGLE_SPIN
    return SpinParams(
        G1=G1,
        G2=G2,
        T1=_value(raw, "spins", "T1", math.inf),
        T2_star=math.inf if T2 is None else T2,
        kind=_value(raw, "spins", "kind", default_kind),
    )


def _ms(raw: Mapping[str, Any], mech: MechanicalParams) -> MSParams:
    G = _require(_value(raw, "ms", "G", _value(raw, "spins", "G")), "ms.G")
    K = _value(raw, "ms", "K", 1)
    kwargs = {}
    c = _value(raw, "ms", "convention_factor")
    if c is not None:
        kwargs["convention_factor"] = c
    Delta = _value(raw, "ms", "Delta_MS")
    if Delta is None:
        return MSParams.for_closure(mech.omega_m, G, K, sign=_value(raw, "ms", "sign", -1), **kwargs)
    return MSParams(Delta_MS=Delta, K=K, G=G, omega_m=mech.omega_m, **kwargs)


def build_spec(raw: Mapping[str, Any]):
    """Protocol spec described by a validated config tree."""
    protocol = raw.get("protocol")
    if protocol not in PROTOCOLS:
        raise ConfigError("protocol", f"must be one of {list(PROTOCOLS)}, got {protocol!r}")
    section = "mechanical"
    try:
        mech = _mechanical(raw, protocol)
        section = "spins"
        spins = _spins(raw, mech, protocol)
        section = "integrator"
        integrator = IntegratorSettings(_value(raw, "integrator", "rtol"), _value(raw, "integrator", "atol"))
        section = "convergence"
        policy = CutoffPolicy(
            step=_value(raw, "convergence", "step", 5),
            tolerance=_value(raw, "convergence", "tolerance", 1e-4),
            max_dim=_value(raw, "convergence", "max_dim"),
            strict=_value(raw, "run", "strict", False),
            enabled=_value(raw, "convergence", "enabled", True),
        )
        section = "run"
        common: Dict[str, Any] = {
            "noise": _value(raw, "run", "noise", True),
            "thermal": _value(raw, "run", "thermal", False),
            "integrator": integrator,
            "convergence": policy,
        }
        if protocol == TRIPLE_SWAP:
            return TripleSwapSpec(
                mech,
                spins,
                epsilon=_value(raw, "run", "epsilon", 0.0),
                initial_spin=_initial_spin(raw),
                cutoffs=_int_map(raw, "cutoffs"),
                points_per_segment=_value(raw, "run", "points_per_segment", 40),
                **common,
            )
        if protocol == MS_GATE:
            section = "ms"
            ms = _ms(raw, mech)
            section = "run"
            return MSGateSpec(
                mech,
                spins,
                ms,
                nbar=_value(raw, "run", "nbar"),
                cutoff=_value(raw, "run", "cutoff"),
                points=_value(raw, "run", "points", 101),
                **common,
            )
        ratio = _value(raw, "run", "G_over_g")
        explicit = _value(raw, "spins", "G")
        G = ratio * mech.g if ratio is not None else explicit
        n = _value(raw, "run", "n", None if G is not None else 1)
        return EnsembleTransferSpec(
            mech,
            spins,
            n=n,
            G=G,
            G_scale=_value(raw, "run", "G_scale", 1.0),
            occupations=_int_map(raw, "occupations"),
            cutoffs=_int_map(raw, "cutoffs"),
            model=_value(raw, "run", "model", NETWORK_MODEL),
            initial_spin=_initial_spin(raw),
            points=_value(raw, "run", "points", 101),
            **common,
        )
    except ParameterError as e:
        raise ConfigError(section, str(e)) from e


# ----------------------------
# Sweeps
# ----------------------------

def _axis(i: int, entry: Any, seed: int) -> AxisSpec:
    where = f"sweep.axes[{i}]"
    if not isinstance(entry, dict) or "path" not in entry:
        raise ConfigError(where, "each axis needs a 'path' and one of values / range / random")
    path = entry["path"]
    kind = quantity_kind(path)
    given = [k for k in ("values", "range", "random") if k in entry]
    if len(given) != 1:
        raise ConfigError(where, f"give exactly one of values / range / random, got {given or 'none'}")
    how = given[0]
    if how == "values":
        values = entry["values"]
        if not isinstance(values, list) or not values:
            raise ConfigError(f"{where}.values", "must be a non-empty list")
        return AxisSpec(path, tuple(values))
    spec = entry[how]
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}.{how}", "must be a table")
    if not isinstance(kind, str):
        raise ConfigError(where, f"{path} is not a numeric quantity; use an explicit values list")
    lo_key, hi_key = ("start", "stop") if how == "range" else ("low", "high")
    try:
        lo = parse_quantity(spec[lo_key], kind)
        hi = parse_quantity(spec[hi_key], kind)
        num = _as_int(f"{where}.{how}.num", spec["num"])
    except KeyError as e:
        raise ConfigError(f"{where}.{how}", f"missing {e.args[0]!r}") from None
    except ValueError as e:
        raise ConfigError(f"{where}.{how}", str(e)) from None
    if num < 1:
        raise ConfigError(f"{where}.{how}.num", "must be >= 1")
    if how == "range":
        values = np.linspace(lo, hi, num)
    else:
        values = np.random.default_rng(seed + i).uniform(lo, hi, num)
    return AxisSpec(path, tuple(float(v) for v in values))


def sweep_config(cfg: RunConfig) -> SweepConfig:
    table = cfg.sweep_table
    unknown = sorted(set(table) - SWEEP_KEYS)
    if unknown:
        raise ConfigError(f"sweep.{unknown[0]}", f"unknown key (expected one of {sorted(SWEEP_KEYS)})")
    seed = _as_int("sweep.seed", table.get("seed", 0))
    axes_raw = table.get("axes") or []
    if not isinstance(axes_raw, list) or not axes_raw:
        raise ConfigError("sweep.axes", "a sweep needs at least one axis")
    axes: List[AxisSpec] = [_axis(i, entry, seed) for i, entry in enumerate(axes_raw)]
    paths = [a.path for a in axes]
    if len(set(paths)) != len(paths):
        raise ConfigError("sweep.axes", f"duplicate axis paths {paths}")
    workers = table.get("workers")
    return SweepConfig(
        protocol=cfg.protocol,
        fixed=cfg.raw,
        axes=tuple(axes),
        output=table.get("output"),
        workers=None if workers is None else _as_int("sweep.workers", workers),
        seed=seed,
        scan=bool(table.get("scan", cfg.scan)),
        mesh_size=_as_int("sweep.mesh_size", table.get("mesh_size", cfg.mesh_size)),
    )


# ----------------------------
# Figure presets
# ----------------------------

def _preset_dir():
    return resources.files("phononet") / "presets"


def list_presets() -> List[Tuple[str, str]]:
    """(name, description) of every shipped preset, sorted by name."""
    out = []
    for entry in _preset_dir().iterdir():
        if entry.name.endswith(".toml"):
            data = tomllib.loads(entry.read_text(encoding="utf-8"))
            out.append((entry.name[: -len(".toml")], str(data.get("description", ""))))
    return sorted(out)


def load_preset(name: str) -> RunConfig:
    entry = _preset_dir() / f"{name}.toml"
    if not entry.is_file():
        names = ", ".join(n for n, _ in list_presets())
        raise ConfigError("figure", f"unknown preset {name!r} (available: {names})")
    try:
        data = tomllib.loads(entry.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"presets/{name}.toml", f"invalid TOML: {e}") from e
    return parse_config(data, source=f"preset:{name}")
