"""Environment and path configuration.

Loads .env (or .env.example). Resolves relative paths from project root.
Run parameters live in TOML files (see phononet.schema); the environment only
carries overrides: worker count, integrator tolerances, verbosity, output dir.

If PHONONET_DATA_DIR is set, that path is used as project root.
"""
from __future__ import annotations

import os
from pathlib import Path

from dotenv import find_dotenv, load_dotenv


def _truthy(v: str | None) -> bool:
    return (v or "").strip().lower() in {"1", "true", "yes", "on"}


# Project root: PHONONET_DATA_DIR or discover via .env
_data_dir = os.environ.get("PHONONET_DATA_DIR")
if _data_dir:
    PROJECT_ROOT = Path(_data_dir).resolve()
    _env_file = PROJECT_ROOT / ".env"
    if not _env_file.exists():
        _env_file = PROJECT_ROOT / ".env.example" if (PROJECT_ROOT / ".env.example").exists() else None
    _env_path = str(_env_file) if _env_file and _env_file.exists() else None
else:
    _env_path = find_dotenv(".env", usecwd=True)
    if not _env_path:
        _env_path = find_dotenv(".env.example", usecwd=True)
    PROJECT_ROOT = Path(_env_path).resolve().parent if _env_path else Path.cwd()

if _env_path:
    load_dotenv(_env_path)

DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10
DEFAULT_MAX_DIM = 4096


def resolve_path(p: str) -> str:
    """
    Resolve a filesystem path from an env or config string.
    - If absolute: return as-is
    - If relative: resolve relative to PROJECT_ROOT
    """
    path = Path(p)
    return str(path if path.is_absolute() else (PROJECT_ROOT / path).resolve())


def env_flag(name: str) -> bool:
    return _truthy(os.environ.get(name))


def verbose_enabled() -> bool:
    return env_flag("PHONONET_VERBOSE")


def env(name: str) -> str:
    v = os.environ.get(name)
    if not v:
        raise RuntimeError(f"Missing env var: {name}")
    return v


def env_int(name: str, default: int) -> int:
    raw = (os.environ.get(name) or "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        raise RuntimeError(f"Bad env var {name}={raw!r} (expected an integer)")


def env_float(name: str, default: float) -> float:
    raw = (os.environ.get(name) or "").strip()
    if not raw:
        return default
    try:
        return float(raw)
    except ValueError:
        raise RuntimeError(f"Bad env var {name}={raw!r} (expected a number)")


def default_tolerances() -> tuple[float, float]:
    """(rtol, atol) for the adaptive integrator, PHONONET_RTOL / PHONONET_ATOL overriding."""
    return env_float("PHONONET_RTOL", DEFAULT_RTOL), env_float("PHONONET_ATOL", DEFAULT_ATOL)


def default_workers() -> int:
    return max(1, env_int("PHONONET_WORKERS", 1))


def max_dimension() -> int:
    return env_int("PHONONET_MAX_DIM", DEFAULT_MAX_DIM)


def output_dir() -> str:
    return resolve_path(os.environ.get("PHONONET_OUTPUT_DIR", "out"))
