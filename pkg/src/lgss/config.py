"""Run configuration: flat dotted keys with CLI > file > profile defaults.

A config file is a JSON object whose keys are the dotted names below
(nested objects are flattened, so ``{"grouping": {"beta": 10}}`` and
``{"grouping.beta": 10}`` are equivalent).
"""
from __future__ import annotations

import json
import math
from pathlib import Path

from .bnet import init_bnet_params
from .data import MODALITIES, SyntheticConfig
from .grouping import GroupingConfig
from .sequence import TrainConfig, init_seq_params

# desk-scale synthetic corpora
SYNTHETIC_DEFAULTS = {
    "seed": 0,
    "synth.count": 20,
    "synth.n_scenes_min": 5,
    "synth.n_scenes_max": 15,
    "synth.shots_per_scene_min": 4,
    "synth.shots_per_scene_max": 20,
    "synth.dim": 16,
    "synth.noise_sigma": 0.3,
    "synth.anchor_share_prob": 0.3,
    "synth.shot_duration_min_s": 1.0,
    "synth.shot_duration_max_s": 6.0,
    "bnet.w_b": 4,
    "bnet.e_m": 16,
    "bnet.rel_kernel": None,
    "bnet.activation": "relu",
    "bnet.inner": "elementwise",
    "seq.w_t": 10,
    "seq.hidden": 16,
    "train.epochs": 30,
    "train.lr": 0.01,
    "train.lr_decay_epoch": 15,
    "train.lr_decay_factor": 0.1,
    "train.class_weights": [1.0, 9.0],
    "train.clip_norm": 5.0,
    "segment.tau": 0.5,
    "grouping.init_count": 600,
    "grouping.j_min": 2,
    "grouping.j_max": 30,
    "grouping.beta": math.inf,
    "grouping.k_set": 5,
    "grouping.k_para": 10,
    "grouping.step_size": 0.05,
    "grouping.level": "shot",
    "grouping.preceding": True,
}

# full-size movies with extracted features
FULL_DEFAULTS = {
    **SYNTHETIC_DEFAULTS,
    "bnet.e_m": 128,
    "seq.hidden": 64,
    "grouping.j_min": 50,
    "grouping.j_max": 400,
}

PROFILES = {"synthetic": SYNTHETIC_DEFAULTS, "full": FULL_DEFAULTS}


class ConfigError(ValueError):
    pass


def flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key, value, default):
    if value is None or default is None:
        return value
    if isinstance(value, str) and isinstance(default, (int, float)) and not isinstance(default, bool):
        value = json.loads(value) if value not in ("inf", "Infinity") else math.inf
        if value is None:
            return None
    if isinstance(default, bool):
        if isinstance(value, str):
            return value.lower() in ("1", "true", "yes")
        return bool(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, int):
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{key} expects an integer, got {value}")
        return int(value)
    if isinstance(default, list) and isinstance(value, str):
        return json.loads(value)
    return value


class RunConfig(dict):
    """Resolved flat configuration."""

    @classmethod
    def build(cls, file=None, overrides: dict | None = None, profile: str | None = None):
        raw = {}
        if file is not None:
            try:
                raw = flatten(json.loads(Path(file).read_text()))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{file}: {exc}") from exc
        profile = (overrides or {}).get("profile") or raw.pop("profile", None) or profile or "synthetic"
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}")
        base = PROFILES[profile]
        cfg = cls(base)
        for layer in (raw, {k: v for k, v in (overrides or {}).items() if k != "profile"}):
            for k, v in layer.items():
                if k not in base:
                    raise ConfigError(f"unknown config key {k!r}")
                cfg[k] = _coerce(k, v, base[k])
        cfg["profile"] = profile
        cfg.check()
        return cfg

    def check(self):
        try:
            self.grouping().validate()
            self.train().validate()
            self.synthetic().validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self["bnet.w_b"] < 1 or self["bnet.e_m"] < 1 or self["seq.hidden"] < 1:
            raise ConfigError("bnet.w_b, bnet.e_m and seq.hidden must be >= 1")
        if self["seq.w_t"] < 2 or self["seq.w_t"] % 2:
            raise ConfigError("seq.w_t must be even and >= 2")

    def dumps(self) -> str:
        return json.dumps({k: self[k] for k in sorted(self)}, indent=2, sort_keys=True) + "\n"

    def synthetic(self) -> SyntheticConfig:
        dim = self["synth.dim"]
        return SyntheticConfig(
            n_scenes_range=(self["synth.n_scenes_min"], self["synth.n_scenes_max"]),
            shots_per_scene_range=(self["synth.shots_per_scene_min"], self["synth.shots_per_scene_max"]),
            modality_dims={m: dim for m in MODALITIES},
            noise_sigma=self["synth.noise_sigma"],
            anchor_share_prob=self["synth.anchor_share_prob"],
            shot_duration_range_s=(self["synth.shot_duration_min_s"], self["synth.shot_duration_max_s"]),
            seed=self["seed"],
        )

    def train(self) -> TrainConfig:
        return TrainConfig(epochs=self["train.epochs"], lr=self["train.lr"],
                           lr_decay_epoch=self["train.lr_decay_epoch"],
                           lr_decay_factor=self["train.lr_decay_factor"],
                           class_weights=tuple(self["train.class_weights"]),
                           clip_norm=self["train.clip_norm"], seed=self["seed"])

    def grouping(self) -> GroupingConfig:
        init = self["grouping.init_count"]
        return GroupingConfig(
            init_count=None if init in (None, 0) else init,
            j_range=(self["grouping.j_min"], self["grouping.j_max"]),
            beta=self["grouping.beta"], k_set=self["grouping.k_set"],
            k_para=self["grouping.k_para"], step_size=self["grouping.step_size"],
            level=self["grouping.level"], preceding=self["grouping.preceding"],
            tau=self["segment.tau"],
        )

    def init_models(self, modality_dims):
        bnet = init_bnet_params(modality_dims, e_m=self["bnet.e_m"], w_b=self["bnet.w_b"],
                                seed=self["seed"], rel_kernel=self["bnet.rel_kernel"],
                                activation=self["bnet.activation"], inner=self["bnet.inner"])
        seq = init_seq_params(bnet.out_dim, hidden=self["seq.hidden"], w_t=self["seq.w_t"],
                              seed=self["seed"] + 1)
        return bnet, seq
