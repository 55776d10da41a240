"""Scene documents: JSON serialization of mirror systems.

Schema version "1". Every geometric number is written as its shortest
round-trip decimal string (``repr`` of the float), so a parsed document
reproduces the original values bit for bit on any IEEE-754 platform and
the emitted text is identical across runs. Sampled grids are stored as
base64 blocks of little-endian float64. Unknown keys abort the parse in
strict mode; in lax mode they are kept aside, keyed by their JSON path,
and written back verbatim on serialization.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from .domains import ConvexPolygon, Disc, DomainUnion, Interval
from .errors import SceneFormatError
from .fields import (
    AffineField,
    GridField,
    GridField1D,
    PolynomialField,
    SecondMirrorHeight,
    SumField,
)
from .mirrors import MirrorPatch, MirrorSystem, Stage

SCHEMA_VERSION = "1"

__all__ = [
    "SCHEMA_VERSION",
    "SceneDocument",
    "load_scene",
    "save_scene",
    "scene_equal",
    "scene_from_text",
    "scene_to_text",
]


# ---------------------------------------------------------------- numbers

def _enc_float(x) -> str:
    return repr(float(x))


def _dec_float(s, path) -> float:
    try:
        return float(s)
    except (TypeError, ValueError):
        raise SceneFormatError(f"expected a number at {path}, got {s!r}") from None


def _enc_vec(v):
    return [_enc_float(x) for x in np.atleast_1d(np.asarray(v, dtype=float))]


def _dec_vec(v, path):
    if not isinstance(v, list):
        raise SceneFormatError(f"expected a list of numbers at {path}")
    return np.array([_dec_float(x, path) for x in v])


def _enc_table(arr):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        return [_enc_float(x) for x in arr]
    return [[_enc_float(x) for x in row] for row in arr]


def _dec_table(rows, path):
    if not isinstance(rows, list) or not rows:
        raise SceneFormatError(f"expected a coefficient table at {path}")
    if isinstance(rows[0], list):
        return np.array([[_dec_float(x, path) for x in row] for row in rows])
    return np.array([_dec_float(x, path) for x in rows])


def _enc_grid(values):
    arr = np.ascontiguousarray(np.asarray(values, dtype="<f8"))
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def _dec_grid(obj, path):
    try:
        shape = tuple(int(n) for n in obj["shape"])
        raw = base64.b64decode(obj["data"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneFormatError(f"malformed grid block at {path}: {exc}") from None
    arr = np.frombuffer(raw, dtype="<f8")
    if arr.size != int(np.prod(shape)):
        raise SceneFormatError(f"grid data length does not match shape at {path}")
    return arr.reshape(shape).astype(float)


# ---------------------------------------------------------------- extras

class _Extras:
    """Unknown-key sidecar collected during lax parsing."""

    def __init__(self, strict: bool):
        self.strict = strict
        self.found: dict[str, dict] = {}

    def take(self, obj, known, path):
        if not isinstance(obj, dict):
            raise SceneFormatError(f"expected an object at {path or '/'}")
        unknown = [k for k in obj if k not in known]
        if unknown:
            if self.strict:
                raise SceneFormatError(
                    f"unknown keys {sorted(unknown)} at {path or '/'}"
                )
            self.found[path] = {k: obj[k] for k in sorted(unknown)}


def _merge_extras(root, extras: dict[str, dict]):
    for path, kv in extras.items():
        node = root
        if path:
            for part in path.split("/"):
                node = node[int(part)] if isinstance(node, list) else node[part]
        node.update(kv)


# ---------------------------------------------------------------- fields

def _enc_field(f, path):
    if isinstance(f, PolynomialField):
        return {
            "type": "polynomial",
            "coefficients": _enc_table(f.coeffs),
            "center": _enc_vec(f.center),
        }
    if isinstance(f, SecondMirrorHeight):
        return {
            "type": "image-height",
            "potential": _enc_field(f.potential, path + "/potential"),
            "c": _enc_float(f.c),
            "h": _enc_float(f.h),
            "anchor": None if f.anchor is None else _enc_vec(f.anchor),
        }
    if isinstance(f, AffineField):
        return {
            "type": "affine",
            "base": _enc_field(f.base, path + "/base"),
            "scale": _enc_float(f.scale),
            "offset": _enc_float(f.offset),
            "shift": None if f.shift is None else _enc_vec(f.shift),
            "linear": None if f.linear is None else _enc_vec(f.linear),
        }
    if isinstance(f, SumField):
        return {
            "type": "sum",
            "terms": [
                _enc_field(t, f"{path}/terms/{i}") for i, t in enumerate(f.terms)
            ],
        }
    if isinstance(f, GridField):
        return {
            "type": "grid",
            "x0": _enc_float(f.x0),
            "x1": _enc_float(f.x1),
            "y0": _enc_float(f.y0),
            "y1": _enc_float(f.y1),
            "values": _enc_grid(f.values),
        }
    if isinstance(f, GridField1D):
        return {
            "type": "grid1d",
            "x0": _enc_float(f.x0),
            "x1": _enc_float(f.x1),
            "values": _enc_grid(f.values),
        }
    raise SceneFormatError(
        f"field of type {type(f).__name__} at {path} has no scene encoding"
    )


_FIELD_KEYS = {
    "polynomial": {"type", "coefficients", "center"},
    "image-height": {"type", "potential", "c", "h", "anchor"},
    "affine": {"type", "base", "scale", "offset", "shift", "linear"},
    "sum": {"type", "terms"},
    "grid": {"type", "x0", "x1", "y0", "y1", "values"},
    "grid1d": {"type", "x0", "x1", "values"},
}


def _dec_field(obj, path, ex: _Extras):
    kind = obj.get("type") if isinstance(obj, dict) else None
    if kind not in _FIELD_KEYS:
        raise SceneFormatError(f"unknown field type {kind!r} at {path}")
    ex.take(obj, _FIELD_KEYS[kind], path)
    if kind == "polynomial":
        return PolynomialField(
            _dec_table(obj["coefficients"], path),
            center=_dec_vec(obj["center"], path),
        )
    if kind == "image-height":
        pot = _dec_field(obj["potential"], path + "/potential", ex)
        anchor = obj.get("anchor")
        return SecondMirrorHeight(
            pot,
            _dec_float(obj["c"], path),
            _dec_float(obj["h"], path),
            anchor=None if anchor is None else _dec_vec(anchor, path),
        )
    if kind == "affine":
        return AffineField(
            _dec_field(obj["base"], path + "/base", ex),
            scale=_dec_float(obj["scale"], path),
            offset=_dec_float(obj["offset"], path),
            shift=None if obj["shift"] is None else _dec_vec(obj["shift"], path),
            linear=None if obj["linear"] is None else _dec_vec(obj["linear"], path),
        )
    if kind == "sum":
        return SumField(
            [
                _dec_field(t, f"{path}/terms/{i}", ex)
                for i, t in enumerate(obj["terms"])
            ]
        )
    if kind == "grid":
        return GridField(
            _dec_float(obj["x0"], path),
            _dec_float(obj["x1"], path),
            _dec_float(obj["y0"], path),
            _dec_float(obj["y1"], path),
            _dec_grid(obj["values"], path),
        )
    return GridField1D(
        _dec_float(obj["x0"], path),
        _dec_float(obj["x1"], path),
        _dec_grid(obj["values"], path),
    )


# ---------------------------------------------------------------- domains

def _enc_domain(d, path):
    if isinstance(d, Disc):
        return {
            "type": "disc",
            "center": _enc_vec(d.center),
            "radius": _enc_float(d.radius),
        }
    if isinstance(d, ConvexPolygon):
        return {"type": "polygon", "vertices": _enc_table(d.vertices)}
    if isinstance(d, Interval):
        return {"type": "interval", "lo": _enc_float(d.lo), "hi": _enc_float(d.hi)}
    if isinstance(d, DomainUnion):
        return {
            "type": "union",
            "parts": [
                _enc_domain(p, f"{path}/parts/{i}") for i, p in enumerate(d.parts)
            ],
        }
    raise SceneFormatError(
        f"domain of type {type(d).__name__} at {path} has no scene encoding"
    )


_DOMAIN_KEYS = {
    "disc": {"type", "center", "radius"},
    "polygon": {"type", "vertices"},
    "interval": {"type", "lo", "hi"},
    "union": {"type", "parts"},
}


def _dec_domain(obj, path, ex: _Extras):
    kind = obj.get("type") if isinstance(obj, dict) else None
    if kind not in _DOMAIN_KEYS:
        raise SceneFormatError(f"unknown domain type {kind!r} at {path}")
    ex.take(obj, _DOMAIN_KEYS[kind], path)
    if kind == "disc":
        return Disc(tuple(_dec_vec(obj["center"], path)), _dec_float(obj["radius"], path))
    if kind == "polygon":
        return ConvexPolygon(_dec_table(obj["vertices"], path))
    if kind == "interval":
        return Interval(_dec_float(obj["lo"], path), _dec_float(obj["hi"], path))
    return DomainUnion(
        [_dec_domain(p, f"{path}/parts/{i}", ex) for i, p in enumerate(obj["parts"])]
    )


# ---------------------------------------------------------------- metadata

def _jsonable(value, path):
    """Free-form metadata sanitized to plain JSON values."""
    if isinstance(value, (str, bool, int)) or value is None:
        return value
    if isinstance(value, float):
        return float(value)
    if isinstance(value, np.generic):
        return _jsonable(value.item(), path)
    if isinstance(value, np.ndarray):
        return [_jsonable(v, path) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v, f"{path}/{i}") for i, v in enumerate(value)]
    if isinstance(value, dict):
        return {str(k): _jsonable(v, f"{path}/{k}") for k, v in value.items()}
    raise SceneFormatError(
        f"metadata value of type {type(value).__name__} at {path} is not JSON-safe"
    )


# ---------------------------------------------------------------- systems

def _enc_system(sys: MirrorSystem, path):
    return {
        "patches": [
            {
                "id": p.patch_id,
                "domain": _enc_domain(p.base_domain, f"{path}/patches/{i}/domain"),
                "height": _enc_field(p.height, f"{path}/patches/{i}/height"),
            }
            for i, p in enumerate(sys.patches)
        ],
        "stages": [
            {
                "name": s.name,
                "patch_ids": list(s.patch_ids),
                "c": _enc_float(s.c),
                "h": _enc_float(s.h),
                "kind": s.kind,
            }
            for s in sys.stages
        ],
        "expected_reflections": int(sys.expected_reflections),
        "entry": _enc_domain(sys.entry_domain, f"{path}/entry"),
        "exit": _enc_domain(sys.exit_domain, f"{path}/exit"),
        "path_constants": [_enc_float(c) for c in sys.path_constants],
        "metadata": _jsonable(sys.metadata, f"{path}/metadata"),
    }


_SYSTEM_KEYS = {
    "patches",
    "stages",
    "expected_reflections",
    "entry",
    "exit",
    "path_constants",
    "metadata",
}
_PATCH_KEYS = {"id", "domain", "height"}
_STAGE_KEYS = {"name", "patch_ids", "c", "h", "kind"}


def _dec_system(obj, path, ex: _Extras) -> MirrorSystem:
    ex.take(obj, _SYSTEM_KEYS, path)
    patches = []
    for i, p in enumerate(obj.get("patches", ())):
        ppath = f"{path}/patches/{i}"
        ex.take(p, _PATCH_KEYS, ppath)
        patches.append(
            MirrorPatch(
                base_domain=_dec_domain(p["domain"], ppath + "/domain", ex),
                height=_dec_field(p["height"], ppath + "/height", ex),
                patch_id=str(p["id"]),
            )
        )
    stages = []
    for i, s in enumerate(obj.get("stages", ())):
        spath = f"{path}/stages/{i}"
        ex.take(s, _STAGE_KEYS, spath)
        stages.append(
            Stage(
                name=str(s["name"]),
                patch_ids=tuple(str(x) for x in s["patch_ids"]),
                c=_dec_float(s["c"], spath),
                h=_dec_float(s["h"], spath),
                kind=str(s.get("kind", "pair")),
            )
        )
    try:
        return MirrorSystem(
            patches=patches,
            expected_reflections=int(obj["expected_reflections"]),
            entry_domain=_dec_domain(obj["entry"], path + "/entry", ex),
            exit_domain=_dec_domain(obj["exit"], path + "/exit", ex),
            path_constants=[_dec_float(c, path) for c in obj.get("path_constants", ())],
            stages=stages,
            metadata=dict(obj.get("metadata", {})),
        )
    except KeyError as exc:
        raise SceneFormatError(f"missing key {exc} in system at {path or '/'}") from None


# ---------------------------------------------------------------- document

@dataclass(eq=False)
class SceneDocument:
    """Top-level container written to and read from scene JSON files."""

    systems: list
    dimension: int = 2
    version: str = SCHEMA_VERSION
    metadata: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, SceneDocument):
            return NotImplemented
        return scene_to_text(self) == scene_to_text(other)


_DOC_KEYS = {"version", "dimension", "systems", "metadata"}


def scene_to_text(doc: SceneDocument) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    obj = {
        "version": doc.version,
        "dimension": int(doc.dimension),
        "systems": [
            _enc_system(s, f"systems/{i}") for i, s in enumerate(doc.systems)
        ],
        "metadata": _jsonable(doc.metadata, "metadata"),
    }
    _merge_extras(obj, doc.extras)
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def scene_from_text(text: str, strict: bool = False) -> SceneDocument:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(
            f"scene is not valid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})"
        ) from None
    if not isinstance(obj, dict):
        raise SceneFormatError("scene document must be a JSON object")
    version = obj.get("version")
    if version != SCHEMA_VERSION:
        raise SceneFormatError(
            f"unsupported scene schema version {version!r} (expected {SCHEMA_VERSION!r})"
        )
    ex = _Extras(strict)
    ex.take(obj, _DOC_KEYS, "")
    dimension = obj.get("dimension", 2)
    if dimension not in (1, 2):
        raise SceneFormatError(f"dimension must be 1 or 2, got {dimension!r}")
    systems = [
        _dec_system(s, f"systems/{i}", ex)
        for i, s in enumerate(obj.get("systems", ()))
    ]
    return SceneDocument(
        systems=systems,
        dimension=int(dimension),
        version=str(version),
        metadata=dict(obj.get("metadata", {})),
        extras=ex.found,
    )


def scene_equal(a: SceneDocument, b: SceneDocument) -> bool:
    return scene_to_text(a) == scene_to_text(b)


def save_scene(path, doc: SceneDocument) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(scene_to_text(doc))


def load_scene(path, strict: bool = False) -> SceneDocument:
    with open(path, "r", encoding="utf-8") as fh:
        return scene_from_text(fh.read(), strict=strict)
