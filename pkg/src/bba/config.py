"""JSON experiment configuration with strict key checking.

A config file is a JSON object with any of the sections ``data``, ``source``,
``oracle``, ``dmg``, ``tma`` (each mapping field name to value), plus the
top-level keys ``polarity`` ({"positive": [...], "negative": [...]}),
``hidden``, ``seeds`` and ``output_dir``. Missing keys take their defaults;
unknown keys are an error.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json

from .data import ShiftConfig
from .dmg import DmgConfig
from .experiment import ExperimentConfig, TrainConfig
from .polarity import PolarityMap
from .tma import TmaConfig


class ConfigError(ValueError):
    pass


SECTIONS = {
    "data": ShiftConfig,
    "source": TrainConfig,
    "oracle": TrainConfig,
    "dmg": DmgConfig,
    "tma": TmaConfig,
}
TOP_LEVEL = {"polarity", "hidden", "seeds", "output_dir", *SECTIONS}


def _build(section, cls, values):
    if not isinstance(values, dict):
        raise ConfigError(f"{section}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in values:
        if key not in names:
            raise ConfigError(f"{section}.{key}: unknown key")
    kwargs = {}
    for key, value in values.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    for key in raw:
        if key not in TOP_LEVEL:
            raise ConfigError(f"{key}: unknown key")
    kwargs = {name: _build(name, cls, raw.get(name, {})) for name, cls in SECTIONS.items()}
    if "polarity" in raw:
        pol = raw["polarity"]
        if not isinstance(pol, dict) or set(pol) != {"positive", "negative"}:
            raise ConfigError("polarity: expected keys 'positive' and 'negative'")
        try:
            kwargs["polarity"] = PolarityMap(tuple(pol["positive"]), tuple(pol["negative"]))
        except ValueError as exc:
            raise ConfigError(f"polarity: {exc}") from exc
    for key in ("hidden", "seeds"):
        if key in raw:
            kwargs[key] = tuple(int(v) for v in raw[key])
    if "output_dir" in raw:
        kwargs["output_dir"] = str(raw["output_dir"])
    cfg = ExperimentConfig(**kwargs)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.polarity.num_classes != 8:
        raise ConfigError("polarity: the synthetic benchmark has 8 classes")


def to_dict(cfg: ExperimentConfig) -> dict:
    out = {name: dataclasses.asdict(getattr(cfg, name)) for name in SECTIONS}
    for sec in out.values():
        for k, v in sec.items():
            if isinstance(v, tuple):
                sec[k] = list(v)
    out["polarity"] = cfg.polarity.to_dict()
    out["hidden"] = list(cfg.hidden)
    out["seeds"] = list(cfg.seeds)
    out["output_dir"] = cfg.output_dir
    return out


def load(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return from_dict(raw)


def dump(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON form, ignoring ``output_dir``."""
    d = to_dict(cfg)
    d.pop("output_dir")
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()
