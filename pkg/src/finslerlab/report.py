"""Report documents: schema-versioned JSON run records.

Top-level layout (schema version 1)::

    {
      "schema": "finslerlab.report",
      "schema_version": 1,
      "engine_version": "0.1.0",
      "command": "report" | "verify" | "classify" | "geodesic",
      "config": {...},          # echo of the effective RunConfig
      "payload": {...},         # command-specific numeric content
      "status": {"passed": bool, "exit_code": int},
      "timings": {...}          # wall-clock seconds; excluded from determinism
    }

Everything except ``timings`` is a pure function of (config, engine version),
so two runs produce byte-identical :func:`payload_bytes`.
"""
from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

from . import __version__

SCHEMA = "finslerlab.report"
SCHEMA_VERSION = 1


def clean(obj: Any) -> Any:
    """Convert numpy containers to JSON-ready builtins; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def document(command: str, config: dict, payload: dict, passed: bool, exit_code: int, timings: dict) -> dict:
    return {
        "schema": SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "engine_version": __version__,
        "command": command,
        "config": clean(config),
        "payload": clean(payload),
        "status": {"passed": bool(passed), "exit_code": int(exit_code)},
        "timings": clean(timings),
    }


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def payload_bytes(doc: dict) -> bytes:
    """Canonical bytes of everything that must be reproducible (all but timings)."""
    d = {k: v for k, v in doc.items() if k != "timings"}
    return json.dumps(d, sort_keys=True, allow_nan=False).encode()


def residual_table(rep) -> dict:
    return {
        "suite": rep.suite,
        "passed": rep.passed,
        "items": [{"name": i.name, "max": i.max, "mean": i.mean, "tol": i.tol, "passed": i.passed,
                   "worst_sample": i.worst} for i in rep.items],
        "notes": list(rep.notes),
    }
