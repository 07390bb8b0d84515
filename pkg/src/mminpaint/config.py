"""Run configuration: defaults, JSON-schema validation, YAML/JSON loading."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema
import yaml

from .errors import ConfigError

_num = {"type": "number"}
_int = {"type": "integer"}
_pos_int = {"type": "integer", "minimum": 1}
_nonneg_int = {"type": "integer", "minimum": 0}
_lr = {"type": "number", "exclusiveMinimum": 0}


def _stage(extra=None):
    props = {"steps": _nonneg_int, "lr": _lr, "batch": _pos_int}
    props.update(extra or {})
    return {"type": "object", "additionalProperties": False, "properties": props}


SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": _nonneg_int,
        "D": {"type": "integer", "minimum": 16, "multipleOf": 8},
        "D_h": {"type": "integer", "minimum": 2},
        "T_train": {"type": "integer", "minimum": 10},
        "steps": {"type": "integer", "minimum": 4},
        "cfg_scale": {"type": "number", "minimum": 0},
        "lambda_intensity": {"type": "number", "exclusiveMinimum": 0},
        "alpha_depth": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "box_expand": {"type": "number", "minimum": 0},
        "p_empty": {"type": "number", "minimum": 0, "maximum": 1},
        "resize": {"enum": ["avg", "nearest"]},
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_scenes": _pos_int,
                "n_frames": _pos_int,
                "n_objects": {"type": "integer", "minimum": 0, "maximum": 12},
                "n_items": _pos_int,
                "n_eval": _pos_int,
                "empty_boxes": _nonneg_int,
            },
        },
        "filters": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "min_lidar_points": _nonneg_int,
                "min_box_px": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                "max_iou": {"type": "number", "minimum": 0, "maximum": 1},
                "min_visibility": {"type": "number", "minimum": 0, "maximum": 1},
                "classes": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "quota": _nonneg_int,
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ae_widths": {"type": "array", "items": _pos_int, "minItems": 3, "maxItems": 3},
                "latent_channels": _pos_int,
                "unet_widths": {"type": "array", "items": _pos_int, "minItems": 2, "maxItems": 2},
                "heads": _pos_int,
                "d_head": _pos_int,
                "token_dim": _pos_int,
                "fourier_bands": _pos_int,
            },
        },
        "camera_ae": _stage({"kl_weight": {"type": "number", "minimum": 0}}),
        "range_ae": _stage({
            "kl_weight": {"type": "number", "minimum": 0},
            "disc_weight": {"type": "number", "minimum": 0},
            "eval_every": _pos_int,
        }),
        "base": _stage({"modalities": {"enum": ["camera", "both"]}}),
        "finetune": _stage({"top_k": _pos_int, "eval_every": _pos_int, "select_steps": {"type": "integer", "minimum": 4}}),
    },
}

# Desk-scale defaults. Full-scale values (D=512, LR 8e-5 for 90k steps,
# 4.5e-5 for the range adapters, 100 px / 64 point filters) are reachable
# through the config; these keep a CPU run to minutes.
DEFAULTS = {
    "seed": 0,
    "D": 64,
    "D_h": 8,
    "T_train": 1000,
    "steps": 50,
    "cfg_scale": 5.0,
    "lambda_intensity": 4.0,
    "alpha_depth": 0.5,
    "box_expand": 0.1,
    "p_empty": 0.3,
    "resize": "avg",
    "data": {"n_scenes": 12, "n_frames": 4, "n_objects": 4, "n_items": 96, "n_eval": 4, "empty_boxes": 64},
    "filters": {
        "min_lidar_points": 16,
        "min_box_px": [20, 20],
        "max_iou": 0.5,
        "min_visibility": 0.7,
        "classes": ["car", "pedestrian"],
        "quota": 4096,
    },
    "model": {
        "ae_widths": [32, 64, 128],
        "latent_channels": 4,
        "unet_widths": [64, 128],
        "heads": 4,
        "d_head": 32,
        "token_dim": 64,
        "fourier_bands": 16,
    },
    "camera_ae": {"steps": 400, "lr": 1e-3, "batch": 16, "kl_weight": 1e-6},
    "range_ae": {"steps": 300, "lr": 1e-3, "batch": 16, "kl_weight": 1e-6, "disc_weight": 0.0, "eval_every": 50},
    "base": {"steps": 300, "lr": 5e-4, "batch": 8, "modalities": "camera"},
    "finetune": {"steps": 200, "lr": 1e-3, "batch": 2, "top_k": 5, "eval_every": 20, "select_steps": 10},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def validate_config(cfg: dict) -> dict:
    """Validate against the schema and fill defaults. Errors carry a JSON pointer."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping", "/")
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(exc.message, _pointer(exc.absolute_path)) from None
    full = _merge(DEFAULTS, cfg)
    if full["D"] // full["D_h"] != 8 or full["D"] % full["D_h"]:
        raise ConfigError(f"D / D_h must equal the autoencoder downsampling factor 8, got {full['D']}/{full['D_h']}", "/D_h")
    return full


def load_config(path=None, overrides: dict | None = None) -> dict:
    cfg = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}", "/") from None
        try:
            cfg = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot parse {p}: {exc}", "/") from None
        cfg = cfg or {}
    if overrides:
        cfg = _merge(cfg, overrides)
    return validate_config(cfg)
