"""Application config: one JSON file overrides any subset of the defaults.

Layout mirrors the dataclasses:

    {"grid": {"dt": 0.05}, "planner": {"particles": 256},
     "base_cost": {}, "weights": {}, "codes": {}, "controller": {}}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace

from .controller import ControllerConfig
from .costmap import BaseCostConfig, CostWeights, VelocityCodes
from .planner import PlannerConfig
from .world import GridSpec


@dataclass(frozen=True)
class AppConfig:
    grid: GridSpec = GridSpec()
    planner: PlannerConfig = PlannerConfig()
    base_cost: BaseCostConfig = BaseCostConfig()
    weights: CostWeights = CostWeights()
    codes: VelocityCodes = VelocityCodes()
    controller: ControllerConfig = ControllerConfig()


_SECTIONS = {
    "grid": GridSpec,
    "planner": PlannerConfig,
    "base_cost": BaseCostConfig,
    "weights": CostWeights,
    "codes": VelocityCodes,
    "controller": ControllerConfig,
}


def _apply(section_obj, updates: dict):
    valid = {f.name for f in fields(section_obj)}
    unknown = set(updates) - valid
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return replace(section_obj, **updates)


def load_config(path: str | None = None, overrides: dict | None = None) -> AppConfig:
    """Defaults, then the JSON file, then explicit overrides (e.g. CLI flags)."""
    cfg = AppConfig()
    layers = []
    if path is not None:
        with open(path) as f:
            layers.append(json.load(f))
    if overrides:
        layers.append(overrides)
    for layer in layers:
        unknown = set(layer) - set(_SECTIONS)
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        updated = {name: _apply(getattr(cfg, name), updates)
                   for name, updates in layer.items()}
        cfg = replace(cfg, **updated)
    return cfg
