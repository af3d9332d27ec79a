"""Structured run configuration.

A single nested mapping drives every command.  `load_config` merges a user
JSON file over the documented defaults and rejects unknown keys, and
`config_hash` gives a stable digest of the effective configuration so runs
can be tied to the exact settings that produced them.
"""

from __future__ import annotations

import copy
import hashlib
import json

from .simulator import ConfigError, NoticeabilityThresholds, SimConfig
from .lateral import TrainConfig
from .timegan import TimeGanConfig

DEFAULT_CONFIG = {
    "simulate": {
        "side": 15.0,
        "num_users": 1,
        "path_kind": "straight",
        "duration": 300.0,
        "rate": 20.0,
        "speed_mean": 1.0,
        "speed_sigma": 0.05,
        "reset_trigger_distance": 0.5,
        "user_safety_distance": 0.45,
        "wall_safety_distance": 0.2,
        "reset_turn_rate": 90.0,
        "user_weight": 1.4,
        "curvature_feedback": 1.0,
        "max_turn_rate": 45.0,
        "turn_knot_spacing": 0.75,
        "min_curvature_radius": 22.0,
        "rotation_gain_range": [0.67, 1.24],
        "translation_gain_range": [0.86, 1.26],
    },
    "lateral": {
        "variant": "baseline",  # "baseline" | "virtual"
        "lookback": 10,
        "horizon": 2,
        "hidden": 24,
        "layers": 1,
        "lr": 4e-3,
        "batch_size": 512,
        "max_epochs": 50,
        "patience": 10,
        "val_fraction": 0.2,
        "min_windows": 500,
    },
    "rotations": {
        "num_series": 6,
        "duration_s": 120.0,
        "rate": 250.0,
    },
    "preprocess": {
        "target_rate": 10.0,
        "window_len": 25,
        "stride": 1,
    },
    "timegan": {
        "latent_dim": 12,
        "hidden": 12,
        "layers": 1,
        "batch_size": 128,
        "lr": 1e-3,
        "disc_lr": 1e-3,
        "recon_epochs": 40,
        "supervised_epochs": 20,
        "joint_epochs": 400,
        "checkpoint_every": 10,
        "recon_weight": 10.0,
        "supervised_weight": 1.0,
        "moment_weight": 30.0,
        "max_windows": 5000,
        "fixed_epoch": None,  # None = pick checkpoint by validation yaw KL
    },
    "generate": {
        "scale_factor": 10,  # generated windows = scale_factor x corpus windows
        "windows_per_file": 1000,
    },
    "fft": {
        "length": 30000,
        "num_series": 1,
    },
    "metrics": {
        "bucket_width": 10.0,
    },
    "beam": {
        "ap": [0.0, 0.0],
        "beamwidth": 20.0,
    },
    "pipeline": {
        "scenarios": [[1, "straight"], [3, "straight"]],
        "sim_duration": 120.0,
        "rotation_duration_s": 30.0,
        "eval_windows": 2000,
    },
}


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {here} must be a mapping")
            out[key] = _merge(base[key], val, here)
        else:
            out[key] = val
    return out


def load_config(path=None, overrides=None):
    """Defaults, overlaid with a JSON config file and then with an explicit
    override mapping (e.g. command-line flags).  Unknown keys are rejected."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


def config_hash(cfg):
    """sha256 over the canonical JSON form of the effective config."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def sim_config(cfg):
    s = cfg["simulate"]
    thresholds = NoticeabilityThresholds(
        min_curvature_radius=s["min_curvature_radius"],
        rotation_gain_range=tuple(s["rotation_gain_range"]),
        translation_gain_range=tuple(s["translation_gain_range"]),
    )
    return SimConfig(
        side=s["side"], num_users=s["num_users"], path_kind=s["path_kind"],
        duration=s["duration"], rate=s["rate"], thresholds=thresholds,
        speed_mean=s["speed_mean"], speed_sigma=s["speed_sigma"],
        reset_trigger_distance=s["reset_trigger_distance"],
        user_safety_distance=s["user_safety_distance"],
        wall_safety_distance=s["wall_safety_distance"],
        reset_turn_rate=s["reset_turn_rate"], user_weight=s["user_weight"],
        curvature_feedback=s["curvature_feedback"],
        max_turn_rate=s["max_turn_rate"],
        turn_knot_spacing=s["turn_knot_spacing"],
    )


def lateral_train_config(cfg):
    l = cfg["lateral"]
    return TrainConfig(
        hidden=l["hidden"], layers=l["layers"], lr=l["lr"],
        batch_size=l["batch_size"], max_epochs=l["max_epochs"],
        patience=l["patience"], val_fraction=l["val_fraction"],
    )


def timegan_config(cfg):
    t = cfg["timegan"]
    p = cfg["preprocess"]
    return TimeGanConfig(
        features=3, window_len=p["window_len"], latent_dim=t["latent_dim"],
        hidden=t["hidden"], layers=t["layers"], batch_size=t["batch_size"],
        lr=t["lr"], disc_lr=t["disc_lr"], recon_epochs=t["recon_epochs"],
        supervised_epochs=t["supervised_epochs"],
        joint_epochs=t["joint_epochs"], checkpoint_every=t["checkpoint_every"],
        recon_weight=t["recon_weight"],
        supervised_weight=t["supervised_weight"],
        moment_weight=t["moment_weight"],
    )
