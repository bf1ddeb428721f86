"""Run configuration, state files, and CSV emission.

All file formats are plain text chosen for diffability at desk scale:
flat dotted-key config files, JSON state documents with shortest round-trip
decimals (bit-exact for finite doubles), and gnuplot-ready CSV with 17
significant digits. Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from typing import Any

import numpy as np

from .core import Field, make_grid
from .errors import ConfigError, StateFileError
from .model import ModelParams

STATE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    """Everything a reproducible run needs; flags override file values."""

    N: int = 1
    s: float = 0.5
    q: float = 6.0
    lam: float = -2.0
    L: float | None = None  # None: the resolution policy picks the grid
    M: int | None = None
    tol: float = 1e-10
    seed: int = 0
    n_starts: int = 20
    lambda_min: float = -40.0
    points: int = 200
    delta0: float = 1e-2
    fold_tol_lambda: float = 1e-4
    normalized_c: float | None = None
    s_target: float = 0.5
    homotopy_steps: int = 11
    dt: float = 1e-3
    T: float = 20.0
    eps: float = 0.0
    sample_every: int = 10
    out: str | None = None


# dotted key -> (attribute, type); the canonical serialization order
CONFIG_KEYS: dict[str, tuple[str, type]] = {
    "model.N": ("N", int),
    "model.s": ("s", float),
    "model.q": ("q", float),
    "model.lambda": ("lam", float),
    "grid.L": ("L", float),
    "grid.M": ("M", int),
    "solver.tol": ("tol", float),
    "seed": ("seed", int),
    "probe.n_starts": ("n_starts", int),
    "branch.lambda_min": ("lambda_min", float),
    "branch.points": ("points", int),
    "branch.delta0": ("delta0", float),
    "fold.tol_lambda": ("fold_tol_lambda", float),
    "normalized.c": ("normalized_c", float),
    "homotopy.s_target": ("s_target", float),
    "homotopy.steps": ("homotopy_steps", int),
    "evolve.dt": ("dt", float),
    "evolve.T": ("T", float),
    "evolve.eps": ("eps", float),
    "evolve.sample_every": ("sample_every", int),
    "out": ("out", str),
}


def _format_value(val: Any) -> str:
    if isinstance(val, bool):
        raise ConfigError("boolean config values are not used")
    if isinstance(val, (int, np.integer)):
        return str(int(val))
    if isinstance(val, float):
        return repr(val)
    return str(val)


def config_to_text(cfg: RunConfig) -> str:
    """Flat `key = value` lines; keys with value None are omitted."""
    lines = []
    for key, (attr, _) in CONFIG_KEYS.items():
        val = getattr(cfg, attr)
        if val is None:
            continue
        lines.append(f"{key} = {_format_value(val)}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> RunConfig:
    """Parse a config document; unknown keys and bad values are rejected."""
    values: dict[str, Any] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected `key = value`, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {ln}: unknown config key {key!r}")
        attr, typ = CONFIG_KEYS[key]
        try:
            values[attr] = typ(val)
        except ValueError as exc:
            raise ConfigError(f"line {ln}: bad value for {key}: {val!r}") from exc
    return RunConfig(**values)


def config_to_dict(cfg: RunConfig) -> dict[str, Any]:
    """Dotted-key dict used to echo the effective config into output metadata."""
    out = {}
    for key, (attr, _) in CONFIG_KEYS.items():
        val = getattr(cfg, attr)
        if val is not None:
            out[key] = val
    return out


def write_text_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".fracgs-tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(text.encode("utf-8"))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def jsonable(obj: Any) -> Any:
    """Recursively convert to JSON-safe types; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        return val if math.isfinite(val) else None
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    return obj


def write_json_atomic(path: str, obj: Any) -> None:
    write_text_atomic(path, json.dumps(jsonable(obj), indent=1) + "\n")


def encode_state(f: Field, params: ModelParams) -> dict[str, Any]:
    """Single-document state: metadata plus the flat value list (row-major,
    complex interleaved re/im); numbers survive a round trip bit-exactly."""
    vals = f.values.ravel()
    if not np.all(np.isfinite(vals.view(np.float64) if f.kind == "complex" else vals)):
        raise StateFileError("state contains non-finite entries")
    if f.kind == "complex":
        flat = np.empty(2 * vals.size)
        flat[0::2] = vals.real
        flat[1::2] = vals.imag
    else:
        flat = vals.astype(float)
    return {
        "format_version": STATE_FORMAT_VERSION,
        "N": f.grid.N,
        "s": params.s,
        "q": params.q,
        "lambda": params.lam,
        "L": f.grid.L,
        "M": f.grid.M,
        "kind": f.kind,
        "values": [float(v) for v in flat],
    }


def decode_state(doc: dict[str, Any]) -> tuple[Field, ModelParams]:
    """Validate and rebuild (Field, ModelParams) from a state document."""
    version = doc.get("format_version")
    if version != STATE_FORMAT_VERSION:
        raise StateFileError(
            f"version-mismatch: expected format_version {STATE_FORMAT_VERSION}, got {version!r}"
        )
    try:
        grid = make_grid(int(doc["N"]), float(doc["L"]), int(doc["M"]))
        params = ModelParams(int(doc["N"]), float(doc["s"]), float(doc["q"]), float(doc["lambda"]))
        kind = doc["kind"]
        values = np.asarray(doc["values"], dtype=float)
    except KeyError as exc:
        raise StateFileError(f"missing state key: {exc}") from exc
    if kind not in ("real", "complex"):
        raise StateFileError(f"unknown kind {kind!r}")
    expected = grid.size * (2 if kind == "complex" else 1)
    if values.size != expected:
        raise StateFileError(
            f"length-mismatch: expected {expected} values for kind={kind}, got {values.size}"
        )
    if not np.all(np.isfinite(values)):
        raise StateFileError("state contains non-finite entries")
    if kind == "complex":
        arr = values[0::2] + 1j * values[1::2]
    else:
        arr = values
    return Field(grid, arr.reshape(grid.shape)), params


def write_state(path: str, f: Field, params: ModelParams, config: dict | None = None) -> None:
    doc = encode_state(f, params)
    if config is not None:
        doc["config"] = config  # decode_state ignores extra metadata
    write_json_atomic(path, doc)


def read_state(path: str) -> tuple[Field, ModelParams]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise StateFileError(f"not a valid state document: {exc}") from exc
    return decode_state(doc)


BRANCH_CSV_HEADER = (
    "lambda,mass,action,kinetic,potential,power_q,pohozaev_rel,slope,stability,min_abs_eig"
)


def _g17(x: float) -> str:
    return f"{x:.17g}"


def emit_branch_csv(curve, path: str) -> None:
    """One row per branch point, lambda descending, 17 significant digits."""
    if not curve.points:
        raise ValueError("refusing to write an empty curve")
    lines = [BRANCH_CSV_HEADER]
    for p in curve.points:
        lines.append(
            ",".join(
                [
                    _g17(p.lam),
                    _g17(p.mass),
                    _g17(p.action),
                    _g17(p.kinetic),
                    _g17(p.potential),
                    _g17(p.power_q),
                    _g17(p.pohozaev_rel),
                    _g17(p.slope),
                    p.stability,
                    _g17(p.min_abs_eig),
                ]
            )
        )
    write_text_atomic(path, "\n".join(lines) + "\n")


TRAJECTORY_CSV_HEADER = "t,mass,energy,deviation"


def emit_trajectory_csv(traj, path: str) -> None:
    lines = [TRAJECTORY_CSV_HEADER]
    devs = traj.deviation if traj.deviation is not None else [float("nan")] * len(traj.times)
    for t, m, e, d in zip(traj.times, traj.mass, traj.energy, devs):
        lines.append(",".join([_g17(t), _g17(m), _g17(e), _g17(d)]))
    write_text_atomic(path, "\n".join(lines) + "\n")
