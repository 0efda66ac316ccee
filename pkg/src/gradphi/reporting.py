"""Estimate containers and deterministic file output.

Every measured quantity travels as an EstimateReport: point value, Monte
Carlo standard error, and a digest (seed plus parameters) sufficient to
reproduce it. CSV and JSON writers are byte-deterministic: fixed float
formatting, sorted keys, no timestamps.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["EstimateReport", "TVCurve", "write_csv", "write_json", "run_key"]

_Z95 = 1.959963984540054


@dataclass(frozen=True)
class EstimateReport:
    value: float
    stderr: float
    replicas: int
    method: str
    inputs_digest: dict
    ci_level: float = 0.95

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be nonnegative")
        if self.replicas < 1:
            raise ValueError("replicas must be at least 1")

    def ci(self) -> tuple[float, float]:
        half = _Z95 * self.stderr
        return self.value - half, self.value + half

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TVCurve:
    """Pointwise lower/upper bounds on distance to equilibrium over time."""

    times: np.ndarray
    lower: np.ndarray
    lower_stderr: np.ndarray
    upper: np.ndarray
    upper_stderr: np.ndarray
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        for name in ("lower", "upper"):
            v = getattr(self, name)
            if np.any(v < -1e-12) or np.any(v > 1.0 + 1e-12):
                raise ValueError(f"{name} bound escapes [0, 1]")
        combined = 3.0 * np.hypot(self.lower_stderr, self.upper_stderr)
        if np.any(self.lower > self.upper + combined):
            raise ValueError("lower bound exceeds upper bound beyond noise")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, columns: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named columns with '# key=value' metadata lines on top."""
    path = Path(path)
    cols = {k: np.atleast_1d(np.asarray(v)) for k, v in columns.items()}
    n = {c.size for c in cols.values()}
    if len(n) != 1:
        raise ValueError(f"column lengths differ: { {k: v.size for k, v in cols.items()} }")
    lines = []
    for k in sorted((meta or {}).keys()):
        lines.append(f"# {k}={meta[k]}")
    names = list(cols.keys())
    lines.append(",".join(names))
    for i in range(n.pop()):
        lines.append(",".join(_fmt(cols[name][i]) for name in names))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def read_csv(path):
    """Read a file written by write_csv; returns (meta dict, columns dict)."""
    meta, names, rows = {}, None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = val.strip()
        elif names is None:
            names = line.split(",")
        elif line.strip():
            rows.append([float(v) for v in line.split(",")])
    if names is None:
        raise ValueError(f"{path}: no header row")
    data = np.asarray(rows, dtype=float).reshape(len(rows), len(names))
    return meta, {name: data[:, i] for i, name in enumerate(names)}


class _NumpyEncoder(json.JSONEncoder):
    def default(self, obj):
        if isinstance(obj, (np.integer,)):
            return int(obj)
        if isinstance(obj, (np.floating,)):
            return float(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, (np.bool_,)):
            return bool(obj)
        return super().default(obj)


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, cls=_NumpyEncoder) + "\n")


def run_key(experiment: str, potential: str, n_label: str, seed: int) -> str:
    """Stable directory name keyed by run identity, never by wall clock."""
    digest = hashlib.sha256(
        f"{experiment}|{potential}|{n_label}|{seed}".encode()).hexdigest()[:10]
    return f"{potential}-{n_label}-s{seed}-{digest}"
