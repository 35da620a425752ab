"""Canonical JSON output: sorted keys, floats at 12 significant digits.

Identical inputs (and seed) must produce byte-identical reports, so the
writer is hand-rolled rather than relying on json.dumps float repr.
"""

from __future__ import annotations

import json
import math
from typing import Any


def _render(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite float in report: {value}")
        if value == int(value) and abs(value) < 1e15:
            return f"{value:.1f}"
        return f"{value:.12g}"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        items = sorted(value.items(), key=lambda kv: kv[0])
        inner = ",".join(f"{json.dumps(str(k))}:{_render(v)}" for k, v in items)
        return "{" + inner + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_render(v) for v in value) + "]"
    # numpy scalars and arrays
    if hasattr(value, "item") and not hasattr(value, "__len__"):
        return _render(value.item())
    if hasattr(value, "tolist"):
        return _render(value.tolist())
    raise TypeError(f"cannot serialize {type(value)!r}")


def canonical_dumps(obj: Any) -> str:
    return _render(obj) + "\n"


def write_report(obj: Any, path) -> None:
    with open(path, "w") as fh:
        fh.write(canonical_dumps(obj))
