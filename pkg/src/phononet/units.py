"""Physical-quantity parsing for config files and CLI flags.

Accepts numbers with a unit suffix (e.g. "1GHz", "0.5 K", "150us", "-1.9MHz")
and returns SI values. Frequencies given in Hz are ordinary frequencies f and
come back as angular rates 2*pi*f (rad/s), matching the "G/2pi = 0.1 MHz"
convention; "rad/s" is taken verbatim.
"""
from __future__ import annotations

import math
import re
from typing import Dict, Tuple

# kind -> suffix -> (scale, note). Empty suffix = bare SI number.
_UNITS: Dict[str, Dict[str, float]] = {
    "angular": {
        "hz": 2 * math.pi,
        "khz": 2 * math.pi * 1e3,
        "mhz": 2 * math.pi * 1e6,
        "ghz": 2 * math.pi * 1e9,
        "rad/s": 1.0,
        "": 1.0,
    },
    # plain 1/s rates (e.g. a dephasing rate 1/T2*), no 2*pi
    "rate": {
        "hz": 1.0,
        "khz": 1e3,
        "mhz": 1e6,
        "1/s": 1.0,
        "/s": 1.0,
        "": 1.0,
    },
    "frequency": {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9, "": 1.0},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9, "": 1.0},
    "temperature": {"k": 1.0, "mk": 1e-3, "": 1.0},
    "pressure": {"pa": 1.0, "kpa": 1e3, "mpa": 1e6, "gpa": 1e9, "": 1.0},
    "energy": {"ev": 1.0, "mev": 1e-3, "": 1.0},
    "length": {"m": 1.0, "um": 1e-6, "nm": 1e-9, "pm": 1e-12, "fm": 1e-15, "": 1.0},
    "wavenumber": {"1/m": 1.0, "/m": 1.0, "1/um": 1e6, "": 1.0},
    "density": {"kg/m3": 1.0, "kg/m^3": 1.0, "": 1.0},
    "dimensionless": {"": 1.0},
}

_NUMBER = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|[+-]?inf)\s*(.*?)\s*$")


def split_quantity(s: str) -> Tuple[float, str]:
    """Split "0.5 K" into (0.5, "k"). Unit returned lower-cased, spaces removed."""
    m = _NUMBER.match(s or "")
    if not m:
        raise ValueError(f"Bad quantity {s!r} (expected a number with optional unit, e.g. '1GHz')")
    value = float(m.group(1))
    unit = m.group(2).replace(" ", "").lower()
    return value, unit


def parse_quantity(value: object, kind: str) -> float:
    """
    Parse a config/CLI quantity into SI.

    Numbers (int/float) are already SI. Strings may carry a unit suffix valid
    for ``kind``; an unknown suffix is an error naming the accepted ones.
    """
    if kind not in _UNITS:
        raise ValueError(f"unknown quantity kind {kind!r}")
    if isinstance(value, bool):
        raise ValueError(f"Bad quantity {value!r} (expected a number)")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ValueError(f"Bad quantity {value!r} (expected a number or string)")
    number, unit = split_quantity(value)
    table = _UNITS[kind]
    if unit not in table:
        accepted = ", ".join(u for u in table if u) or "none"
        raise ValueError(f"Bad unit {unit!r} in {value!r} for a {kind} quantity (use {accepted})")
    return number * table[unit]


def format_frequency(omega: float) -> str:
    """Angular rate -> "x.xxx MHz" in ordinary frequency, for log lines."""
    return f"{omega / (2 * math.pi) / 1e6:.6g} MHz"
