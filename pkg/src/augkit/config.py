"""Pipeline configuration: one JSON document, deep-merged over defaults.

Relative data paths are resolved against the directory of the config file.
CLI flags (``--work-dir``, ``--seed``, ``--jobs``, ``--condition``) override
the matching top-level keys.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .errors import AugkitError, ConfigError

DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "work_dir": "work",
    "condition": "baseline",
    "data": {
        "manifest": None,
        "test_manifest": None,
        "out_of_set_manifest": None,
        "trials": None,
        "enrollments": None,
        "audio_root": None,
    },
    "features": {
        "frame_length_ms": 25.0,
        "frame_shift_ms": 10.0,
        "fft_size": 512,
        "mel_bins": 64,
        "fmin_hz": 20.0,
        "fmax_hz": 7600.0,
        "dither": 0.0,
        "log_floor": 1e-10,
        "cmn": True,
    },
    "encoder": {"embed_dim": 128},
    "augment": {
        "pitch_shift": True,
        "speed_factors": [0.9, 1.1],
        "vc": False,
        "vc_mode": "in_set",
        "vc_per_speaker": None,
        "vc_strength": 0.3,
    },
    "filter": {"in_set_threshold": 0.6, "out_of_set_threshold": 0.3},
    "arcface": {"scale": 32.0, "margin": 0.2},
    "train": {
        "recipe": "pretrain_finetune",
        "pretrain_lr": 0.1,
        "pretrain_epochs": 200,
        "finetune_lr": 0.01,
        "finetune_epochs": 50,
        "momentum": 0.9,
        "batch_size": 64,
        "train_projection": True,
    },
    "score": {"use_projection": True},
    "dcf": {"p_target": 0.1, "c_miss": 1.0, "c_fa": 1.0},
}

PATH_KEYS = ("manifest", "test_manifest", "out_of_set_manifest", "trials", "enrollments", "audio_root")


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where}{key} must be a table")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    raw = {}
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        base_dir = path.resolve().parent
    cfg = _merge(DEFAULTS, raw)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    cfg.update(overrides)
    for key in PATH_KEYS:
        if cfg["data"][key] is not None:
            cfg["data"][key] = str((base_dir / cfg["data"][key]).resolve())
    # a work dir given on the command line is relative to the cwd, not the config
    work_base = Path.cwd() if "work_dir" in overrides else base_dir
    cfg["work_dir"] = str((work_base / cfg["work_dir"]).resolve())
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    from .audio_dsp import MAX_FACTOR, MIN_FACTOR
    from .augmentation import FilterPolicy
    from .features import FeatureConfig
    from .losses_training import ArcFaceConfig
    from .scoring_metrics import DcfConfig

    try:
        FeatureConfig(**cfg["features"])
        ArcFaceConfig(num_classes=2, embed_dim=cfg["encoder"]["embed_dim"], **cfg["arcface"])
        DcfConfig(**cfg["dcf"])
        FilterPolicy("in_set", cfg["filter"]["in_set_threshold"])
        FilterPolicy("out_of_set", cfg["filter"]["out_of_set_threshold"])
    except (AugkitError, TypeError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    if not isinstance(cfg["jobs"], int) or cfg["jobs"] < 1:
        raise ConfigError("jobs must be a positive integer")
    if cfg["encoder"]["embed_dim"] < 8:
        raise ConfigError("encoder.embed_dim must be >= 8")
    for f in cfg["augment"]["speed_factors"]:
        if not MIN_FACTOR <= f <= MAX_FACTOR or f == 1.0:
            raise ConfigError(f"speed factor {f} must lie in [{MIN_FACTOR}, {MAX_FACTOR}] and differ from 1.0")
    if cfg["augment"]["vc_mode"] not in ("in_set", "out_of_set"):
        raise ConfigError("augment.vc_mode must be 'in_set' or 'out_of_set'")
    if not 0 <= cfg["augment"]["vc_strength"] <= 1:
        raise ConfigError("augment.vc_strength must lie in [0, 1]")
    if cfg["train"]["recipe"] not in ("pretrain_finetune", "single"):
        raise ConfigError("train.recipe must be 'pretrain_finetune' or 'single'")
    if not cfg["condition"] or "/" in cfg["condition"]:
        raise ConfigError("condition must be a non-empty name without '/'")


def config_hash(cfg: dict, keys=None) -> str:
    """SHA-256 of the canonical JSON of ``cfg`` (optionally a subset of sections)."""
    part = cfg if keys is None else {k: cfg[k] for k in keys}
    blob = json.dumps(part, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def stage_seed(seed: int, stage: str) -> int:
    """Per-stage seed: first 8 bytes of sha256(f"{seed}:{stage}"), big-endian."""
    digest = hashlib.sha256(f"{seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "big")
