"""Deterministic report serialization: JSON with 17-significant-digit floats.

The standard json module formats floats with repr, whose digit count varies;
reports here need byte-stable output with full float64 precision, so floats
are rendered with '%.17g' everywhere (JSON and CSV alike). Non-finite floats
are rejected rather than silently emitted.
"""

from __future__ import annotations

import json
from dataclasses import asdict, is_dataclass

import numpy as np


def format_float(value: float) -> str:
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"cannot serialize non-finite float {value}")
    return format(value, ".17g")


def _render(obj, indent: int, pieces: list) -> None:
    pad = "  " * indent
    if is_dataclass(obj) and not isinstance(obj, type):
        _render(asdict(obj), indent, pieces)
    elif isinstance(obj, dict):
        if not obj:
            pieces.append("{}")
            return
        pieces.append("{\n")
        for pos, (key, value) in enumerate(obj.items()):
            pieces.append(f"{pad}  {json.dumps(str(key))}: ")
            _render(value, indent + 1, pieces)
            pieces.append(",\n" if pos < len(obj) - 1 else "\n")
        pieces.append(pad + "}")
    elif isinstance(obj, (list, tuple)) or isinstance(obj, np.ndarray):
        items = list(obj)
        if not items:
            pieces.append("[]")
            return
        pieces.append("[\n")
        for pos, value in enumerate(items):
            pieces.append(pad + "  ")
            _render(value, indent + 1, pieces)
            pieces.append(",\n" if pos < len(items) - 1 else "\n")
        pieces.append(pad + "]")
    elif isinstance(obj, bool) or isinstance(obj, np.bool_):
        pieces.append("true" if obj else "false")
    elif obj is None:
        pieces.append("null")
    elif isinstance(obj, (int, np.integer)):
        pieces.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        pieces.append(format_float(obj))
    elif isinstance(obj, str):
        pieces.append(json.dumps(obj))
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} into a report")


def to_json(obj) -> str:
    pieces: list = []
    _render(obj, 0, pieces)
    pieces.append("\n")
    return "".join(pieces)


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        fh.write(to_json(obj))


def write_csv(path, header: list, rows: list) -> None:
    """Delimited output; floats use the same 17-significant-digit format."""

    def cell(value) -> str:
        if isinstance(value, bool):
            return str(int(value))
        if isinstance(value, (float, np.floating)):
            return format_float(value)
        return str(value)

    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(cell(v) for v in row) + "\n")
