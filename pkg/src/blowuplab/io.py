"""Run configuration, deterministic file output, and run manifests."""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config schema

@dataclass(frozen=True)
class Key:
    type: type | tuple
    default: Any = None
    check: Any = None  # callable(value) -> error message or None


def _positive(v):
    return None if v > 0 else "must be positive"


def _window(v):
    if len(v) != 2 or not all(isinstance(x, (int, float)) for x in v):
        return "must be a pair of numbers"
    if v[0] < -7 or v[1] > 1.5:
        return "must lie within [-7, 1.5]"
    return None


_COMMON = {
    "model": Key(str, None, lambda v: None if v.lower() in ("wm", "ym") else "must be 'wm' or 'ym'"),
    "d": Key(int, None, lambda v: None if 3 <= v <= 9 else "must satisfy 3 <= d <= 9"),
}

SCHEMAS: dict[str, dict[str, Key]] = {
    "profile": {
        **_COMMON,
        "n_samples": Key(int, 201, lambda v: None if v >= 2 else "must be >= 2"),
        "y_max": Key(float, 2.0, _positive),
    },
    "spectrum": {
        **_COMMON,
        "window": Key(list, [-7.0, 1.5], _window),
        "step": Key(float, 0.05, lambda v: None if 0 < v <= 0.05 else "must satisfy 0 < step <= 0.05"),
        "xtol": Key(float, 1e-8, _positive),
        "eigenfunction_samples": Key(int, 197, lambda v: None if v >= 2 else "must be >= 2"),
        "eigenfunction_y_max": Key(float, 0.98, lambda v: None if 0 < v < 1 else "must lie in (0, 1)"),
        "workers": Key(int, 1, _positive),
    },
    "evolve": {
        **_COMMON,
        "preset": Key(str, None),
        "family": Key(str, "gauss", lambda v: None if v in ("gauss", "selfsimilar") else "unknown family"),
        "A": Key(float, 10.0),
        "sigma": Key(float, 0.5, _positive),
        "r0": Key(float, 0.0),
        "T0": Key(float, 1.0, _positive),
        "n_nodes": Key(int, 513, lambda v: None if v >= 129 else "must be >= 129"),
        "R": Key(float, 5.0, lambda v: None if v >= 3 else "must be >= 3"),
        "tau_relax": Key(float, 1e-2, _positive),
        "monitor_floor": Key(float, 1.0, _positive),
        "smoothing_passes": Key(int, 2, lambda v: None if v >= 0 else "must be >= 0"),
        "cfl": Key(float, 0.4, lambda v: None if 0 < v <= 1 else "must lie in (0, 1]"),
        "stop_threshold": Key(float, 1e8, lambda v: None if v >= 1e6 else "must be >= 1e6"),
        "t_max": Key(float, 50.0, _positive),
        "snapshot_stride": Key(int, 20, _positive),
        "snapshot_files": Key(int, 12, lambda v: None if v >= 0 else "must be >= 0"),
        "overlay_s": Key(list, [2.0, 4.0, 6.0, 8.0, 10.0]),
        "profile_s": Key(float, 4.0),
    },
    "fit": {
        "run_dir": Key(str, None),
        "profile_s": Key(float, 4.0),
    },
    "verify": {
        "epsilon": Key(str, "fuchs", lambda v: None if v in ("fuchs", "printed") else "must be 'fuchs' or 'printed'"),
        "perturb_table": Key(float, 0.0),
        "quick": Key(bool, False),
    },
    "sweep": {
        "presets": Key(list, None),
        "workers": Key(int, 1, _positive),
        "n_nodes": Key(int, 513, lambda v: None if v >= 129 else "must be >= 129"),
    },
}

REQUIRED = {
    "profile": ("model", "d"),
    "spectrum": ("model", "d"),
    "evolve": (),
    "fit": ("run_dir",),
    "verify": (),
    "sweep": (),
}


def parse_config(command: str, raw: dict) -> dict:
    """Validate ``raw`` against the command schema; unknown keys are errors."""
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    schema = SCHEMAS[command]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    out = {}
    for name, key in schema.items():
        if name not in raw or raw[name] is None:
            out[name] = key.default
            continue
        v = raw[name]
        types = key.type if isinstance(key.type, tuple) else (key.type,)
        if float in types and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if isinstance(v, bool) and bool not in types:
            raise ConfigError(f"{name}: expected {key.type.__name__}, got bool")
        if not isinstance(v, types):
            raise ConfigError(f"{name}: expected {'/'.join(t.__name__ for t in types)}, got {type(v).__name__}")
        if isinstance(v, float) and not math.isfinite(v):
            raise ConfigError(f"{name}: must be finite")
        if key.check is not None:
            msg = key.check(v)
            if msg:
                raise ConfigError(f"{name}: {msg}")
        out[name] = v
    missing = [k for k in REQUIRED[command] if out.get(k) is None]
    if missing:
        raise ConfigError(f"missing required key(s) for {command}: {', '.join(missing)}")
    return out


def load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None


# ---------------------------------------------------------------- reference data

def load_reference_table() -> dict:
    text = resources.files("blowuplab").joinpath("data/reference_eigenvalues.json").read_text(encoding="utf-8")
    return json.loads(text)


def reference_eigenvalues(kind: str, d: int) -> list[float] | None:
    table = load_reference_table()
    return table.get(kind.upper(), {}).get(str(d))


# ---------------------------------------------------------------- writers

def fmt(x) -> str:
    """Shortest round-trip float text; identical on every run."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, Path):
        return str(obj)
    return obj


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write_text(path, dumps_json(obj))


def csv_text(columns: dict[str, Any], header: list[str] | tuple = ()) -> str:
    names = list(columns)
    cols = [np.asarray(columns[n], dtype=float) for n in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("CSV columns differ in length")
    lines = [f"# {h}" for h in header]
    lines.append(",".join(names))
    for i in range(n):
        lines.append(",".join(fmt(c[i]) for c in cols))
    return "\n".join(lines) + "\n"


def write_csv(path, columns: dict[str, Any], header=()) -> Path:
    return atomic_write_text(path, csv_text(columns, header))


def read_csv(path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    """(header key=value pairs, columns) from a file written by write_csv."""
    meta, rows, names = {}, [], None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                body = line[1:].strip()
                for part in body.split():
                    if "=" in part:
                        k, v = part.split("=", 1)
                        meta[k] = v
            elif names is None:
                names = line.split(",")
            elif line:
                rows.append([float(v) for v in line.split(",")])
    data = np.array(rows, dtype=float).reshape(-1, len(names or []))
    return meta, {n: data[:, i] for i, n in enumerate(names or [])}


# ---------------------------------------------------------------- manifest

class RunManifest:
    """Collects artifact names and results; written atomically at the end.

    Wall-clock timestamps appear only here, never in data files.
    """

    def __init__(self, out_dir, command: str, config: dict, model=None):
        self.out_dir = Path(out_dir)
        self.command = command
        self.config = config
        self.model = model
        self.started = datetime.now(timezone.utc).isoformat(timespec="seconds")
        self.files: list[str] = []
        self.results: dict = {}
        self.checks: dict[str, bool] = {}

    def add(self, path) -> Path:
        path = Path(path)
        rel = path.relative_to(self.out_dir).as_posix()
        if rel not in self.files:
            self.files.append(rel)
        return path

    def write(self) -> Path:
        missing = [f for f in self.files if not (self.out_dir / f).is_file()]
        if missing:
            raise FileNotFoundError(f"manifest names missing files: {missing}")
        doc = {
            "version": __version__,
            "command": self.command,
            "model": None if self.model is None else self.model.kind.value,
            "d": None if self.model is None else self.model.d,
            "config": self.config,
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "results": self.results,
            "checks": self.checks,
            "files": sorted(self.files),
        }
        return write_json(self.out_dir / "manifest.json", doc)
