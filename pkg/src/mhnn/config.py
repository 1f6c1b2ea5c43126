"""Experiment config file: a JSON object with optional ``model``, ``train``
and ``sweep`` sections. Unknown keys anywhere are an error."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace

from .model import MHNNConfig
from .sweeps import SweepSpec
from .training import TrainConfig

SECTIONS = ("model", "train", "sweep")


@dataclass
class ExperimentConfig:
    model: dict = field(default_factory=dict)  # MHNNConfig fields; shape fields may come from data
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepSpec = field(default_factory=SweepSpec)

    def model_config(self, channels: int, window: int, classes: int) -> MHNNConfig:
        values = {"channels": channels, "window": window, "classes": classes}
        values.update(self.model)
        cfg = MHNNConfig.from_dict(values)
        if (cfg.channels, cfg.window, cfg.classes) != (channels, window, classes):
            raise ValueError(
                f"config shape ({cfg.channels}, {cfg.window}, {cfg.classes}) does not match data "
                f"({channels}, {window}, {classes})"
            )
        cfg.validate()
        return cfg


def parse_config(obj: dict) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ValueError("config must be a JSON object")
    unknown = set(obj) - set(SECTIONS)
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    model = dict(obj.get("model", {}))
    known = {f.name for f in fields(MHNNConfig)}
    if set(model) - known:
        raise ValueError(f"unknown model config keys: {sorted(set(model) - known)}")
    train = TrainConfig.from_dict(obj.get("train", {}))
    train.validate()
    sweep = SweepSpec.from_dict(obj.get("sweep", {}))
    sweep.validate()
    return ExperimentConfig(model, train, sweep)


def load_config(path=None, seed: int | None = None, precision: int | None = None,
                paper_protocol: bool | None = None) -> ExperimentConfig:
    """Read ``path`` (or defaults) and apply command-line overrides."""
    cfg = ExperimentConfig()
    if path is not None:
        with open(path) as fh:
            cfg = parse_config(json.load(fh))
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if precision is not None:
        overrides["precision"] = precision
    if paper_protocol:
        overrides["paper_protocol"] = True
    if overrides:
        cfg.train = replace(cfg.train, **overrides)
        cfg.train.validate()
    return cfg
