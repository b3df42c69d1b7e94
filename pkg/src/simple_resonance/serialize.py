"""Deterministic JSON and CSV output."""

from __future__ import annotations

import json
import math
from typing import Any


def format_float(x: float) -> str:
    if not math.isfinite(x):
        return str(x)
    return f"{x:.17g}"


def _normalize(obj: Any) -> Any:
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else str(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):  # numpy scalars
        return _normalize(obj.item())
    return obj


def _encode(o, indent, level):
    pad = "" if indent is None else "\n" + " " * (indent * (level + 1))
    end = "" if indent is None else "\n" + " " * (indent * level)
    sep = ", " if indent is None else ","
    if isinstance(o, bool) or o is None:
        yield json.dumps(o)
    elif isinstance(o, float):
        yield format_float(o)
    elif isinstance(o, int):
        yield str(o)
    elif isinstance(o, str):
        yield json.dumps(o)
    elif isinstance(o, dict):
        if not o:
            yield "{}"
            return
        yield "{"
        for i, key in enumerate(sorted(o)):
            yield (sep if i else "") + pad + json.dumps(key) + ": "
            yield from _encode(o[key], indent, level + 1)
        yield end + "}"
    else:
        if not o:
            yield "[]"
            return
        yield "["
        for i, v in enumerate(o):
            yield (sep if i else "") + pad
            yield from _encode(v, indent, level + 1)
        yield end + "]"


def dumps(obj: Any, indent: int | None = 2) -> str:
    """JSON with sorted keys and 17 significant digits; non-finite floats become strings."""
    return "".join(_encode(_normalize(obj), indent, 0))
