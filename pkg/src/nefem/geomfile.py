"""JSON geometry files.

Two forms are accepted.  A preset reference::

    {"preset": "bump_cube", "params": {"amplitude": 0.2}, "resolution": [4, 4, 4]}

or an explicit patch::

    {
      "name": "my_domain",
      "degrees": [2, 2],
      "knots_u": [0, 0, 0, 1, 1, 1],
      "knots_v": [0, 0, 0, 1, 1, 1],
      "control_points": [[[x, y, z], ...], ...],   # n1 lists of n2 points
      "weights": [[...], ...],                       # optional, n1 x n2
      "axis": 2,
      "bottom": 0.0,
      "resolution": [4, 4, 4]
    }

Validation errors name the offending field, e.g. ``weights[1][2]``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import GeometryError, InvalidPatchError, KnotVectorError, SchemaError
from .geometry import PRESETS, ExtrudedDomain
from .nurbs import NurbsPatch
from .spline import KnotVector

__all__ = ["load_geometry", "parse_geometry", "dump_geometry", "resolve_geometry"]

_KEYS = {"name", "degrees", "knots_u", "knots_v", "control_points", "weights", "axis",
         "bottom", "resolution", "preset", "params"}


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{path}: expected a number, got {type(value).__name__}")
    if not np.isfinite(value):
        raise SchemaError(f"{path}: must be finite")
    return float(value)


def _int(value, path, lo=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{path}: expected an integer")
    if lo is not None and value < lo:
        raise SchemaError(f"{path}: must be >= {lo}")
    return value


def _list(value, path, length=None):
    if not isinstance(value, list):
        raise SchemaError(f"{path}: expected a list")
    if length is not None and len(value) != length:
        raise SchemaError(f"{path}: expected {length} entries, got {len(value)}")
    return value


def _resolution(data):
    if "resolution" not in data:
        return None
    res = _list(data["resolution"], "resolution", 3)
    out = tuple(_int(r, f"resolution[{k}]", 1) for k, r in enumerate(res))
    if out[2] < 2:
        raise SchemaError("resolution[2]: need at least 2 layers")
    return out


def parse_geometry(data):
    """Validate a decoded JSON object and build an :class:`ExtrudedDomain`."""
    if not isinstance(data, dict):
        raise SchemaError("<root>: expected an object")
    unknown = set(data) - _KEYS
    if unknown:
        raise SchemaError(f"<root>: unknown field(s) {sorted(unknown)}")
    res = _resolution(data)
    if "preset" in data:
        name = data["preset"]
        if name not in PRESETS:
            raise SchemaError(f"preset: unknown preset {name!r}; choose from {sorted(PRESETS)}")
        params = data.get("params", {})
        if not isinstance(params, dict):
            raise SchemaError("params: expected an object")
        for k, v in params.items():
            _number(v, f"params.{k}")
        kwargs = dict(params)
        if res is not None:
            kwargs["resolution"] = res
        try:
            return PRESETS[name](**kwargs)
        except TypeError as exc:
            raise SchemaError(f"params: {exc}") from None

    for key in ("degrees", "knots_u", "knots_v", "control_points"):
        if key not in data:
            raise SchemaError(f"{key}: required field missing")
    deg = _list(data["degrees"], "degrees", 2)
    p, q = (_int(d, f"degrees[{k}]", 1) for k, d in enumerate(deg))
    kvs = []
    for key, d in (("knots_u", p), ("knots_v", q)):
        knots = [_number(t, f"{key}[{k}]") for k, t in enumerate(_list(data[key], key))]
        try:
            kvs.append(KnotVector(knots, d))
        except KnotVectorError as exc:
            raise SchemaError(f"{key}: {exc}") from None
    n1, n2 = kvs[0].n, kvs[1].n
    cp_raw = _list(data["control_points"], "control_points", n1)
    cp = np.empty((n1, n2, 3))
    for i, row in enumerate(cp_raw):
        for j, pt in enumerate(_list(row, f"control_points[{i}]", n2)):
            for k, c in enumerate(_list(pt, f"control_points[{i}][{j}]", 3)):
                cp[i, j, k] = _number(c, f"control_points[{i}][{j}][{k}]")
    w = np.ones((n1, n2))
    if "weights" in data:
        for i, row in enumerate(_list(data["weights"], "weights", n1)):
            for j, x in enumerate(_list(row, f"weights[{i}]", n2)):
                w[i, j] = _number(x, f"weights[{i}][{j}]")
                if w[i, j] <= 0:
                    raise SchemaError(f"weights[{i}][{j}]: must be positive, got {w[i, j]}")
    axis = _int(data.get("axis", 2), "axis", 0)
    if axis > 2:
        raise SchemaError("axis: must be 0, 1 or 2")
    bottom = _number(data.get("bottom", 0.0), "bottom")
    name = data.get("name", "custom")
    if not isinstance(name, str):
        raise SchemaError("name: expected a string")
    try:
        patch = NurbsPatch(kvs[0], kvs[1], cp, w)
        return ExtrudedDomain(name, patch, axis, bottom, res or (2, 2, 2))
    except (InvalidPatchError, GeometryError) as exc:
        raise SchemaError(f"<root>: {exc}") from None


def load_geometry(path):
    """Read and validate a geometry file."""
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_geometry(data)


def resolve_geometry(ref):
    """Preset name or path to a geometry file."""
    if ref in PRESETS:
        return PRESETS[ref]()
    path = Path(ref)
    if not path.exists():
        raise FileNotFoundError(f"geometry {ref!r} is neither a preset ({', '.join(PRESETS)}) nor a file")
    return load_geometry(path)


def dump_geometry(domain):
    """JSON-serialisable description of a domain with an explicit patch."""
    p = domain.patch
    return {
        "name": domain.name,
        "degrees": [p.kv_u.degree, p.kv_v.degree],
        "knots_u": p.kv_u.knots.tolist(),
        "knots_v": p.kv_v.knots.tolist(),
        "control_points": p.control_points.tolist(),
        "weights": p.weights.tolist(),
        "axis": domain.axis,
        "bottom": domain.bottom,
        "resolution": list(domain.resolution),
    }
