"""Deterministic JSON and CSV writers.

Floats are written with 17 significant digits so every value round-trips
exactly; keys are sorted so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

__all__ = ["FLOAT_FORMAT", "format_float", "to_plain", "dumps", "write_json", "write_csv"]

FLOAT_FORMAT = ".17g"


def format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    text = format(x, FLOAT_FORMAT)
    if not any(ch in text for ch in ".eE"):
        text += ".0"
    return text


def to_plain(obj):
    """Convert numpy containers and scalars to plain Python objects."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _encode(obj, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1))
    close = "\n" + " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[" + ",".join(pad + _encode(v, indent, level + 1) for v in obj) + close + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = (pad + json.dumps(k) + ": " + _encode(obj[k], indent, level + 1) for k in sorted(obj))
        return "{" + ",".join(items) + close + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    return _encode(to_plain(obj), indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def write_csv(path, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    Path(path).write_text(buf.getvalue())
