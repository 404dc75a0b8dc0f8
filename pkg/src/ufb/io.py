"""UFBG grid dumps, run configuration with schema validation, and report writers."""
from __future__ import annotations

import copy
import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .grid import DirichletData, Disc, Grid, GridField
from .operators import ConfigurationError, OperatorSpec
from .solver import PenaltySchedule

MAGIC = b"UFBG"
VERSION = 1


class FormatError(ValueError):
    pass


# UFBG binary --------------------------------------------------------------------------------

def encode_ufbg(field: GridField) -> bytes:
    g = field.grid
    head = MAGIC + struct.pack("<II", VERSION, g.dim) + struct.pack(f"<{g.dim}I", *g.counts)
    bounds = [v for pair in zip(g.lo, g.hi) for v in pair]
    head += struct.pack(f"<{2 * g.dim}d", *bounds)
    return head + np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C")


def decode_ufbg(blob: bytes, disc: Disc | None = None, metadata: dict | None = None) -> GridField:
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}; not a UFBG dump")
    if len(blob) < 12:
        raise FormatError("truncated header")
    version, dim = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise FormatError(f"unsupported UFBG version {version}")
    if dim not in (2, 3):
        raise FormatError(f"unsupported dimension {dim}")
    off = 12
    counts = struct.unpack_from(f"<{dim}I", blob, off)
    off += 4 * dim
    bounds = struct.unpack_from(f"<{2 * dim}d", blob, off)
    off += 16 * dim
    size = int(np.prod(counts))
    if len(blob) != off + 8 * size:
        raise FormatError(f"payload has {len(blob) - off} bytes, expected {8 * size}")
    values = np.frombuffer(blob, dtype="<f8", count=size, offset=off).reshape(counts)
    grid = Grid(bounds[0::2], bounds[1::2], counts, disc)
    return GridField(grid, values.astype(float), metadata or {})


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def write_ufbg(path, field: GridField, sidecar: dict | None = None) -> Path:
    path = Path(path)
    path.write_bytes(encode_ufbg(field))
    meta = {"grid": field.grid.to_dict(), **(sidecar or {})}
    sidecar_path(path).write_text(dumps(meta))
    return path


def read_ufbg(path) -> GridField:
    path = Path(path)
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
    disc_d = meta.get("grid", {}).get("disc")
    return decode_ufbg(path.read_bytes(), Disc(**disc_d) if disc_d else None, meta)


# JSON helpers --------------------------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])
    return path


# run configuration ----------------------------------------------------------------------------

_NUM = {"type": "number"}
CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "operator": {
            "type": "object",
            "properties": {
                "preset": {"enum": ["laplacian", "isotropic", "pucci-plus", "pucci-minus"]},
                "mode": {"enum": ["bellman-sup", "pucci-plus", "pucci-minus", "laplacian"]},
                "lambda": {"type": "number", "exclusiveMinimum": 0},
                "Lambda": {"type": "number", "exclusiveMinimum": 0},
                "n": {"enum": [2, 3]},
                "count": {"type": "integer", "minimum": 1},
                "controls": {"type": "array"},
            },
            "additionalProperties": False,
        },
        "grid": {
            "type": "object",
            "properties": {
                "half_width": _NUM, "h": {"type": "number", "exclusiveMinimum": 0}, "dim": {"enum": [2, 3]},
                "lo": {"type": "array", "items": _NUM}, "hi": {"type": "array", "items": _NUM},
                "counts": {"type": "array", "items": {"type": "integer"}},
                "disc": {"type": "object", "required": ["center", "radius"],
                         "properties": {"center": {"type": "array", "items": _NUM}, "radius": _NUM},
                         "additionalProperties": False},
            },
            "additionalProperties": False,
        },
        "boundary": {
            "type": "object",
            "properties": {"tag": {"type": "string"}, "params": {"type": "object"}, "table": {"type": "array"}},
            "additionalProperties": False,
        },
        "schedule": {
            "type": "object",
            "properties": {"eps0": _NUM, "factor": _NUM, "min_eps": _NUM, "tol": _NUM,
                           "max_outer": {"type": "integer"}},
            "additionalProperties": False,
        },
        "analysis": {
            "type": "object",
            "properties": {
                "delta": _NUM, "delta0": _NUM, "k_min": {"type": "integer"},
                "k_max": {"type": ["integer", "null"]}, "tol_u": {"type": ["number", "null"]},
                "tol_g": {"type": ["number", "null"]}, "C_max": _NUM, "gap_deg": _NUM,
                "radii": {"type": "array", "items": _NUM},
            },
            "additionalProperties": False,
        },
        "sector": {
            "type": "object",
            "properties": {"aperture": _NUM, "orientation": _NUM},
            "additionalProperties": False,
        },
        "blowup": {
            "type": "object",
            "properties": {"rk": {"type": "array", "items": _NUM},
                           "fit_range": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                           "per_octave": {"type": "integer"}, "octaves": {"type": "integer"}},
            "additionalProperties": False,
        },
        "verify": {
            "type": "object",
            "properties": {"samples": {"type": "integer", "minimum": 1}},
            "additionalProperties": False,
        },
        "seed": {"type": "integer"},
    },
}

DEFAULTS = {
    "operator": {"preset": "isotropic", "lambda": 1.0, "Lambda": 2.0, "n": 2, "count": 2},
    "grid": {"half_width": 1.25, "h": 1.0 / 32, "dim": 2, "disc": {"center": [0.0, 0.0], "radius": 1.0}},
    "boundary": {"tag": "zero", "params": {}},
    "schedule": PenaltySchedule().to_dict(),
    "analysis": {"delta": 0.05, "delta0": 0.2, "k_min": 2, "k_max": None, "tol_u": None, "tol_g": None,
                 "C_max": 1e3, "gap_deg": 20.0, "radii": [0.25, 0.125, 0.0625]},
    "sector": {"aperture": 1.5707963267948966, "orientation": 0.0},
    "blowup": {"rk": [0.5, 0.25, 0.125], "fit_range": [2.0 ** -6, 2.0 ** -2], "per_octave": 14, "octaves": 10},
    "verify": {"samples": 10000},
    "seed": 0,
}


def _format_path(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return validate_config(raw, source)


def validate_config(raw, source: str = "<config>") -> dict:
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigurationError(f"{source}: schema violation at {_format_path(exc.absolute_path)}: "
                                 f"{exc.message}") from None
    return raw


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} does not exist")
    return parse_config_text(path.read_text(), str(path))


_REPLACED = ("operator", "grid", "boundary")


def merge_defaults(cfg: dict) -> dict:
    """Full config echo with every default made explicit.  The operator, grid and
    boundary sections replace their defaults as a whole; the others merge key-wise."""
    out = copy.deepcopy(DEFAULTS)
    for key, val in (cfg or {}).items():
        if key in _REPLACED:
            out[key] = copy.deepcopy(val)
            if key == "grid" and "h" in val:
                out[key].setdefault("dim", 2)
        elif isinstance(val, dict):
            out[key] = {**out[key], **val}
        else:
            out[key] = val
    return out


@dataclass
class RunConfig:
    operator: OperatorSpec
    grid: Grid
    boundary: DirichletData
    schedule: PenaltySchedule
    analysis: dict
    sector: dict
    blowup: dict
    verify: dict
    seed: int
    echo: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_dict(cls, cfg: dict | None) -> "RunConfig":
        echo = merge_defaults(validate_config(cfg or {}))
        o = echo["operator"]
        lam, Lam = float(o.get("lambda", 1.0)), float(o.get("Lambda", 1.0))
        if lam > Lam:
            raise ConfigurationError("operator: lambda must not exceed Lambda")
        if "controls" in o:
            spec = OperatorSpec.from_dict(o)
        else:
            mode = o.get("mode", "bellman-sup")
            preset = o.get("preset") or ("isotropic" if mode == "bellman-sup" else mode)
            n = int(o.get("n", 2))
            if preset == "laplacian":
                spec = OperatorSpec.laplacian(n)
            elif preset == "isotropic":
                spec = OperatorSpec.isotropic(lam, Lam, n, int(o.get("count", 2)))
            else:
                spec = OperatorSpec.pucci(lam, Lam, n, preset.split("-")[1])
        grid = Grid.from_dict(echo["grid"])
        boundary = DirichletData.from_dict(echo["boundary"])
        schedule = PenaltySchedule(**echo["schedule"])
        return cls(spec, grid, boundary, schedule, echo["analysis"], echo["sector"], echo["blowup"],
                   echo["verify"], int(echo["seed"]), echo)
