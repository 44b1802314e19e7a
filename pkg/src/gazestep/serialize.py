"""Deterministic JSON emission and atomic file writes.

Stage files must be byte-identical across reruns, so floats are always
rendered with 17 significant digits (enough for an exact double round-trip)
and dict key order follows insertion order of the writer.
"""
from __future__ import annotations

import json
import math
import numbers
import os
from pathlib import Path


def format_float(v: float) -> str:
    if not math.isfinite(v):
        raise ValueError(f"cannot serialize non-finite float {v}")
    return format(float(v), ".17g")


def dumps(obj) -> str:
    """JSON text with 17-significant-digit floats; insertion-ordered keys."""
    if obj is None:
        return "null"
    if isinstance(obj, (bool,)) or type(obj).__name__ == "bool_":
        return "true" if obj else "false"
    if isinstance(obj, numbers.Integral):
        return str(int(obj))
    if isinstance(obj, numbers.Real):
        return format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{dumps(v)}" for k, v in obj.items()) + "}"
    if hasattr(obj, "__iter__"):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file and rename so partial output never lands."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def read_jsonl(path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]
