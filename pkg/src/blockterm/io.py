"""Flat key=value configs, versioned binary checkpoints, and exact CSV I/O.

Config files are one ``key=value`` per line ("#" starts a comment); keys map
1:1 onto the fields of the target config dataclass, unknown keys are
rejected, and missing keys fall back to the dataclass defaults.

Checkpoints are little-endian binary: the magic bytes ``BTCK``, a uint32
format version, a uint32-length JSON header describing the object kind and
its array names/shapes, then the raw float64 payloads in header order.
Round-trips are bit-exact.

CSV files hold floats in Python's shortest round-trip representation
(``repr``), so reading a written file reproduces every float64 exactly.
"""

from __future__ import annotations

import dataclasses
import json
import struct
import typing
from pathlib import Path

import numpy as np

from .cells import BTLinear, GRUCell, LSTMCell
from .layer import BTDecomposition, FactorizedShape

__all__ = [
    "ConfigError",
    "CheckpointError",
    "parse_config",
    "save_checkpoint",
    "load_checkpoint",
    "write_csv",
    "read_csv",
    "write_grid",
    "read_grid",
]

CHECKPOINT_MAGIC = b"BTCK"
CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    """Malformed, unknown, or invalid configuration input."""


class CheckpointError(RuntimeError):
    """Unreadable, truncated, or version-incompatible checkpoint."""


# -- configs -----------------------------------------------------------------


def _coerce(raw: str, annotation, key: str, lineno: int):
    origin = typing.get_origin(annotation)
    if origin is typing.Union:
        # Optional[...]: try the non-None member.
        members = [a for a in typing.get_args(annotation) if a is not type(None)]
        if raw.lower() in ("none", ""):
            return None
        annotation = members[0]
        origin = typing.get_origin(annotation)
    try:
        if annotation is int:
            return int(raw)
        if annotation is float:
            return float(raw)
        if annotation is str:
            return raw
        if annotation is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if origin is tuple:
            inner = typing.get_args(annotation)[0]
            parts = [p for p in raw.split(",") if p.strip() != ""]
            return tuple(inner(p.strip()) for p in parts)
    except ValueError:
        raise ConfigError(
            f"line {lineno}: cannot parse value {raw!r} for key '{key}'"
        ) from None
    raise ConfigError(f"line {lineno}: unsupported type for key '{key}'")


def parse_config(path: str | Path, config_cls):
    """Parse a flat key=value file into an instance of ``config_cls``.

    Raises :class:`ConfigError` (with a line number where applicable) for
    missing files, syntax errors, unknown keys, and failed validation.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    hints = typing.get_type_hints(config_cls)
    known = {f.name: hints[f.name] for f in dataclasses.fields(config_cls)}
    values: dict[str, object] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        values[key] = _coerce(raw, known[key], key, lineno)
    try:
        config = config_cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    validate = getattr(config, "validate", None)
    if validate is not None:
        validate()
    return config


# -- checkpoints ---------------------------------------------------------


def _collect_arrays(model):
    if isinstance(model, BTLinear):
        kind = "bt_linear"
        arrays = list(model.parameters().items())
        meta = _linear_meta(model)
    elif isinstance(model, (LSTMCell, GRUCell)):
        kind = "lstm" if isinstance(model, LSTMCell) else "gru"
        arrays = list(model.parameters().items())
        meta = _linear_meta(model.input_map)
        meta["hidden_size"] = model.hidden_size
    else:
        raise TypeError(f"cannot checkpoint object of type {type(model).__name__}")
    return kind, meta, arrays


def _linear_meta(linear: BTLinear) -> dict:
    if linear.is_compressed:
        btd = linear.weight
        return {
            "compressed": True,
            "input_dims": list(btd.shape.input_dims),
            "output_dims": list(btd.shape.output_dims),
            "n_blocks": btd.n_blocks,
            "rank": btd.rank,
        }
    return {
        "compressed": False,
        "input_size": linear.input_size,
        "output_size": linear.output_size,
    }


def save_checkpoint(model, path: str | Path) -> None:
    """Serialize a BTLinear or cell with bit-exact float64 payloads."""
    kind, meta, arrays = _collect_arrays(model)
    header = {
        "kind": kind,
        "meta": meta,
        "arrays": [[name, list(arr.shape)] for name, arr in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise CheckpointError(f"truncated checkpoint: while reading {what}")
    return data


def load_checkpoint(path: str | Path):
    """Inverse of :func:`save_checkpoint`; returns the reconstructed object."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"version mismatch: bad magic {magic!r}")
        version = struct.unpack("<I", _read_exact(fh, 4, "version"))[0]
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"version mismatch: file has {version}, expected {CHECKPOINT_VERSION}"
            )
        header_len = struct.unpack("<I", _read_exact(fh, 4, "header length"))[0]
        try:
            header = json.loads(_read_exact(fh, header_len, "header"))
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"corrupt header: {exc}") from None
        arrays = {}
        for name, shape in header["arrays"]:
            count = int(np.prod(shape)) if shape else 1
            data = _read_exact(fh, count * 8, f"array '{name}'")
            arrays[name] = np.frombuffer(data, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise CheckpointError("trailing bytes after payload")
    return _rebuild(header, arrays)


def _rebuild_linear(meta: dict, arrays: dict, prefix: str = "") -> BTLinear:
    if meta["compressed"]:
        shape = FactorizedShape(tuple(meta["input_dims"]), tuple(meta["output_dims"]))
        cores = [arrays[f"{prefix}core_{n}"] for n in range(meta["n_blocks"])]
        factors = [
            [arrays[f"{prefix}factor_{n}_{k}"] for k in range(shape.order)]
            for n in range(meta["n_blocks"])
        ]
        weight = BTDecomposition(shape, cores, factors)
    else:
        weight = arrays[f"{prefix}weight"]
    return BTLinear(weight, arrays[f"{prefix}bias"])


def _rebuild(header: dict, arrays: dict):
    kind = header["kind"]
    meta = header["meta"]
    try:
        if kind == "bt_linear":
            return _rebuild_linear(meta, arrays)
        if kind in ("lstm", "gru"):
            input_map = _rebuild_linear(meta, arrays, prefix="wx.")
            cls = LSTMCell if kind == "lstm" else GRUCell
            return cls(input_map, arrays["u"], meta["hidden_size"])
    except KeyError as exc:
        raise CheckpointError(f"header/payload mismatch: missing {exc}") from None
    raise CheckpointError(f"unknown checkpoint kind '{kind}'")


# -- CSV and grid files --------------------------------------------------


def _format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        # Shortest representation that round-trips the exact float64.
        return repr(float(value))
    return str(value)


def write_csv(rows, path: str | Path, header: list[str]) -> None:
    """Write homogeneous rows under a header, floats in round-trip form."""
    width = len(header)
    lines = [",".join(header)]
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"row {i} has {len(row)} fields, header has {width}")
        lines.append(",".join(_format_value(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",") if lines else []
    return header, [line.split(",") for line in lines[1:]]


def write_grid(matrix: np.ndarray, path: str | Path) -> None:
    """Plain-text numeric grid: one matrix row per line, space-separated,
    round-trip exact."""
    matrix = np.atleast_2d(np.asarray(matrix))
    lines = [" ".join(repr(float(v)) for v in row) for row in matrix]
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid(path: str | Path) -> np.ndarray:
    rows = [
        [float(tok) for tok in line.split()]
        for line in Path(path).read_text().splitlines()
        if line.strip()
    ]
    return np.array(rows)
