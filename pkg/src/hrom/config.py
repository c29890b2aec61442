"""Experiment configuration: JSON schema, validation, hashing and builders."""
from __future__ import annotations

import copy
import hashlib
import json

import jsonschema

from .integrator import TimeMesh
from .models import assemble, initial_condition
from .operators import Grid1D, Grid2D

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "required": ["model", "initial_condition", "time"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "model": {
            "type": "object",
            "required": ["kind", "grid"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["single_kdv", "coupled_kdv", "zakharov_kuznetsov"]},
                "params": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"alpha": _NUM, "mu": _NUM},
                },
                "grid": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "a": _NUM, "b": _NUM, "c": _NUM, "d": _NUM,
                        "N": {"type": "integer", "minimum": 3},
                        "dx": _POS,
                        "Nx": {"type": "integer", "minimum": 3},
                        "Ny": {"type": "integer", "minimum": 3},
                    },
                    "required": ["a", "b"],
                },
            },
        },
        "initial_condition": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["one_soliton", "two_soliton", "coupled_gaussian", "zk_pulses"]},
                "params": {"type": "object"},
            },
        },
        "time": {
            "type": "object",
            "required": ["T"],
            "additionalProperties": False,
            "properties": {"T": _POS, "dt": _POS, "Nt": _POS_INT},
        },
        "snapshots": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"stride": _POS_INT, "include_initial": {"type": "boolean"}},
        },
        "basis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["monolithic", "per_field", "shared"]},
                "n": {"oneOf": [_POS_INT, {"type": "object", "additionalProperties": _POS_INT},
                                {"type": "null"}]},
                "threshold": {"type": "number", "exclusiveMinimum": 0, "maximum": 100},
                "method": {"enum": ["svd", "rsvd"]},
                "rank": _POS_INT,
                "oversample": {"type": "integer", "minimum": 0},
                "power_iters": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "rom": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"path": {"enum": ["tensorial", "lifted", "both"]}},
        },
        "eoc": {
            "type": "object",
            "required": ["dx", "dt"],
            "additionalProperties": False,
            "properties": {
                "dx": {"type": "array", "items": _POS, "minItems": 2},
                "dt": {"type": "array", "items": _POS, "minItems": 2},
                "T": _POS,
                "domain": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                "workers": _POS_INT,
            },
        },
        "bench": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n": _POS_INT, "online_steps": _POS_INT, "repeats": _POS_INT},
        },
    },
}

DEFAULTS = {
    "snapshots": {"stride": 1, "include_initial": False},
    "basis": {"mode": "monolithic", "n": None, "threshold": 99.99, "method": "svd",
              "rank": 100, "oversample": 10, "power_iters": 2, "seed": 0},
    "rom": {"path": "both"},
}

# sections that determine the full-order trajectory
_FOM_KEYS = ("model", "initial_condition", "time", "snapshots")


class ConfigValidationError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def validate(cfg: dict) -> dict:
    """Schema-check ``cfg`` and return a copy with defaults filled in."""
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigValidationError(path, exc.message) from None
    out = copy.deepcopy(cfg)
    for key, vals in DEFAULTS.items():
        out[key] = {**vals, **out.get(key, {})}
    mode = out["basis"]["mode"]
    if isinstance(out["basis"]["n"], dict) and mode != "per_field":
        raise ConfigValidationError("basis/n", f"per-field mode counts need mode per_field, got {mode}")
    t = out["time"]
    if ("dt" in t) == ("Nt" in t):
        raise ConfigValidationError("time", "give exactly one of dt, Nt")
    g = out["model"]["grid"]
    if out["model"]["kind"] == "zakharov_kuznetsov":
        missing = [k for k in ("c", "d", "Nx", "Ny") if k not in g]
        if missing:
            raise ConfigValidationError("model/grid", f"2D grid needs {missing}")
    elif ("N" in g) == ("dx" in g):
        raise ConfigValidationError("model/grid", "give exactly one of N, dx")
    return out


def load(path) -> dict:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigValidationError("<root>", f"invalid JSON ({exc})") from None
    return validate(cfg)


def config_hash(cfg: dict, keys=_FOM_KEYS) -> str:
    """sha256 of the canonical JSON of the trajectory-defining sections."""
    sub = {k: cfg.get(k) for k in keys}
    blob = json.dumps(sub, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def build_grid(cfg: dict):
    g = cfg["model"]["grid"]
    if cfg["model"]["kind"] == "zakharov_kuznetsov":
        return Grid2D(g["Nx"], g["Ny"], g["a"], g["b"], g["c"], g["d"])
    if "dx" in g:
        return Grid1D.from_spacing(g["a"], g["b"], g["dx"])
    return Grid1D(g["N"], g["a"], g["b"])


def build_model(cfg: dict):
    return assemble(cfg["model"]["kind"], cfg["model"].get("params", {}), build_grid(cfg))


def build_initial_state(cfg: dict, grid):
    ic = cfg["initial_condition"]
    return initial_condition(ic["kind"], ic.get("params", {}), grid)


def build_mesh(cfg: dict) -> TimeMesh:
    t = cfg["time"]
    try:
        if "dt" in t:
            return TimeMesh.from_dt(t["T"], t["dt"])
        return TimeMesh(t["T"], t["Nt"])
    except ValueError as exc:
        raise ConfigValidationError("time", str(exc)) from None
