"""Flat JSON configuration shared by the CLI and checkpoints.

One flat dict carries every encoder and training field plus
`grad_through_start`; files only need to list the keys they override.
"""

import json
from dataclasses import fields

from .encoder import EncoderConfig
from .pipeline import TrainConfig

_MODEL_KEYS = {"grad_through_start"}


def _field_names(cls):
    return {f.name for f in fields(cls)}


def default_config() -> dict:
    flat = {f.name: getattr(EncoderConfig(), f.name) for f in fields(EncoderConfig)}
    flat.update({f.name: getattr(TrainConfig(), f.name) for f in fields(TrainConfig)})
    flat["grad_through_start"] = True
    return flat


def split_config(flat: dict):
    """Validate a flat dict and split it into (EncoderConfig, TrainConfig,
    grad_through_start).  Unknown keys are rejected by name."""
    enc_keys, train_keys = _field_names(EncoderConfig), _field_names(TrainConfig)
    unknown = set(flat) - enc_keys - train_keys - _MODEL_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    merged = {**default_config(), **flat}
    encoder = EncoderConfig(**{k: merged[k] for k in enc_keys})
    training = TrainConfig(**{k: merged[k] for k in train_keys})
    return encoder, training, bool(merged["grad_through_start"])


def read_config_overrides(path) -> dict:
    """Read a JSON config file and validate its keys, without filling in
    defaults — callers choose what the overrides sit on top of."""
    with open(path, encoding="utf-8") as fh:
        overrides = json.load(fh)
    if not isinstance(overrides, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    split_config({**default_config(), **overrides})  # validation
    return overrides


def load_config(path) -> dict:
    """Read a JSON config file and merge it over the defaults."""
    return {**default_config(), **read_config_overrides(path)}
