"""Experiment configuration: nested frozen dataclasses loaded from YAML.

A config file mirrors :class:`ExperimentConfig`; any key may be omitted and
unknown keys are rejected with their dotted path. Lists become tuples.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field

import yaml

from .experiments import LANE_VARIANTS, CpiExperimentConfig, LaneExperimentConfig, ToyConfig
from .objectives import VARIANTS, Objective


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    objective: Objective = field(default_factory=Objective)
    hypotheses: int = 8
    seeds: tuple = (0,)
    variants: tuple = ("wta", "rwta", "ewta", "dac")
    lane_variants: tuple = tuple(LANE_VARIANTS)
    lambda1: float = 1.0
    lambda2: float = 1.0
    out: str = "runs/out"
    toy: ToyConfig = field(default_factory=ToyConfig)
    cpi: CpiExperimentConfig = field(default_factory=CpiExperimentConfig)
    lanes: LaneExperimentConfig = field(default_factory=LaneExperimentConfig)

    def __post_init__(self):
        if self.hypotheses < 1:
            raise ConfigError("hypotheses must be >= 1")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad:
            raise ConfigError(f"unknown objective variants {bad}")
        bad = [v for v in self.lane_variants if v not in LANE_VARIANTS]
        if bad:
            raise ConfigError(f"unknown lane variants {bad}")

    def objective_for(self, variant: str) -> Objective:
        return dataclasses.replace(self.objective, name=variant)


def _build(cls, data, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown config key {where}{unknown[0]}")
    kwargs = {}
    for k, v in data.items():
        t = hints[k]
        sub = f"{path}.{k}" if path else k
        if dataclasses.is_dataclass(t):
            kwargs[k] = _build(t, v, sub)
        elif isinstance(v, list):
            kwargs[k] = tuple(v)
        else:
            kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path or 'config'}: {e}") from None


def config_from_dict(data) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "")


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: {e}") from None
    return config_from_dict(data or {})


def config_to_dict(cfg) -> dict:
    d = dataclasses.asdict(cfg)
    return json.loads(json.dumps(d))  # tuples -> lists


def config_hash(cfg) -> str:
    """Digest of everything that affects results; the output directory is left out."""
    d = config_to_dict(cfg)
    d.pop("out", None)
    text = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def replace_path(cfg, dotted: str, value):
    """Copy of ``cfg`` with the field at ``a.b.c`` replaced."""
    head, _, rest = dotted.partition(".")
    if not rest:
        return dataclasses.replace(cfg, **{head: value})
    return dataclasses.replace(cfg, **{head: replace_path(getattr(cfg, head), rest, value)})
