"""Flat configuration schema shared by the config file and the command line.

A config file is a YAML (or JSON) mapping whose keys are the names below.
Unknown keys are rejected.  Command-line flags use the same names in
kebab-case and win over file values.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import yaml

from .augmentation import DEFAULT_TAU_C, DEFAULT_TAU_R, DEFAULT_THETA
from .errors import ConfigError
from .instruction import SCHEDULES, AlphaStrategy, InstructionConfig
from .training import TrainConfig


def _floats(value) -> tuple[float, ...]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    return tuple(float(v) for v in value)


def _bool(value) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.lower() in ("true", "yes", "1", "false", "no", "0"):
        return value.lower() in ("true", "yes", "1")
    raise ValueError(f"not a boolean: {value!r}")


def _opt(kind: Callable) -> Callable:
    return lambda v: None if v is None or v == "none" else kind(v)


@dataclass(frozen=True)
class Key:
    kind: Callable[[Any], Any]
    default: Any
    help: str
    choices: tuple | None = None


SCHEMA: dict[str, Key] = {
    "lr": Key(float, 3e-4, "peak learning rate"),
    "warmup_steps": Key(int, 100, "linear warm-up steps"),
    "max_epochs": Key(int, 60, "maximum training epochs"),
    "batch_size": Key(int, 32, "sentence pairs per batch"),
    "dropout": Key(float, 0.45, "dropout rate"),
    "label_smoothing": Key(float, 0.3, "label smoothing"),
    "weight_decay": Key(float, 1e-3, "decoupled weight decay"),
    "beam_size": Key(int, 5, "beam width for evaluation"),
    "early_stop_patience": Key(int, 10, "epochs without dev BLEU-4 gain before stopping"),
    "d_model": Key(int, 64, "model width"),
    "d_ff": Key(int, 256, "feed-forward width"),
    "n_heads": Key(int, 4, "attention heads"),
    "n_layers": Key(int, 2, "encoder and decoder layers"),
    "max_seq_len": Key(int, 64, "longest sequence accepted"),
    "share_embeddings": Key(_bool, False, "one embedding table for source and target"),
    "tie_output": Key(_bool, False, "tie the output projection to the target embedding"),
    "target_bleu": Key(_opt(float), None, "stop once dev BLEU-4 reaches this"),
    "augmentation": Key(_bool, False, "append text-to-text pairs"),
    "theta": Key(_floats, DEFAULT_THETA, "weights of the four gap factors"),
    "tau_r": Key(float, DEFAULT_TAU_R, "rare-gloss count threshold"),
    "tau_c": Key(float, DEFAULT_TAU_C, "cover-ratio threshold for candidates"),
    "instruction": Key(_bool, False, "fuse teacher features"),
    "fuse_encoder": Key(_bool, True, "fuse in the encoder"),
    "fuse_decoder": Key(_bool, True, "fuse in the decoder"),
    "alpha_strategy": Key(str, "learned", "alpha schedule", SCHEDULES),
    "alpha_value": Key(float, 0.65, "constant alpha, or initial learned alpha"),
    "alpha_t_c": Key(_opt(float), None, "cosine cycle length in epochs"),
    "alpha_gamma": Key(_opt(float), None, "cosine phase shift"),
    "alpha_min": Key(float, 0.0, "lower alpha bound for cosine schedules"),
    "alpha_max": Key(float, 1.0, "upper alpha bound for cosine schedules"),
    "adaptive_hidden": Key(_opt(int), None, "adapter hidden width (default d_model)"),
    "per_layer_alpha": Key(_bool, False, "one learned alpha per layer"),
}

TRAIN_KEYS = ("lr", "warmup_steps", "max_epochs", "batch_size", "dropout", "label_smoothing",
              "weight_decay", "beam_size", "early_stop_patience", "d_model", "d_ff", "n_heads",
              "n_layers", "max_seq_len", "share_embeddings", "tie_output", "target_bleu",
              "augmentation", "theta", "tau_r", "tau_c")


def coerce(key: str, value):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    spec = SCHEMA[key]
    try:
        out = spec.kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None
    if spec.choices and out not in spec.choices:
        raise ConfigError(f"{key!r} must be one of {spec.choices}, got {out!r}")
    return out


def load_config_file(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON ({exc})") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = [k for k in data if k not in SCHEMA and k != "seed"]
    if unknown:
        raise ConfigError(f"{path}: unknown config key(s): {', '.join(map(str, unknown))}")
    return {k: (int(v) if k == "seed" else coerce(k, v)) for k, v in data.items()}


def resolve(file_values: dict | None = None, overrides: dict | None = None) -> dict:
    """Defaults, then file values, then non-None overrides."""
    out = {k: s.default for k, s in SCHEMA.items()}
    out["seed"] = 0
    out.update(file_values or {})
    for k, v in (overrides or {}).items():
        if v is not None:
            out[k] = int(v) if k == "seed" else coerce(k, v)
    return out


def instruction_config(settings: dict) -> InstructionConfig | None:
    if not settings["instruction"]:
        return None
    strategy = AlphaStrategy(variant=settings["alpha_strategy"], value=settings["alpha_value"],
                             T_c=settings["alpha_t_c"], gamma=settings["alpha_gamma"],
                             alpha_min=settings["alpha_min"], alpha_max=settings["alpha_max"])
    return InstructionConfig(adaptive_hidden=settings["adaptive_hidden"], alpha=strategy,
                             fuse_encoder=settings["fuse_encoder"],
                             fuse_decoder=settings["fuse_decoder"],
                             per_layer_alpha=settings["per_layer_alpha"])


def train_config(settings: dict) -> TrainConfig:
    kwargs = {k: settings[k] for k in TRAIN_KEYS}
    return TrainConfig(seed=settings["seed"], instruction=instruction_config(settings), **kwargs)


def printable(settings: dict) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in settings.items()}
