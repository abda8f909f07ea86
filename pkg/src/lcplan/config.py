"""Configuration defaults, YAML loading, and config-object construction.

The embedded defaults describe the reference 10-component system: a
50-step horizon at discount 0.975, the built-in deterioration tables, and
the standard loss ratios. File values override the defaults; command-line
overrides win over both.
"""

from __future__ import annotations

import copy
from typing import Any

import numpy as np
import yaml

from .belief import ObservationModel, default_observation_model
from .constraints import BudgetSpec, SoftConstraintSpec
from .costs import LossTable
from .ddmac import TrainConfig
from .deterioration import (
    DEFAULT_RATE_HORIZON,
    ComponentModel,
    DeteriorationType,
    builtin_type,
)
from .env import EnvConfig
from .system import Topology

# Constraint sweep levels, as fractions/multiples of the rebuild cost.
DEFAULT_BUDGET_LEVELS = (0.05, 0.075, 0.10, 0.125, 0.15, 0.175, 0.20, 0.25, 0.30)
DEFAULT_RISK_LEVELS = (1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.25)

# Partial-repair cost as a fraction of the component replacement cost.
PARTIAL_REPAIR_FRACTIONS = {"I": 0.075, "II": 0.15, "III": 0.10}
_EVENT_KEYS = ("E0", "E1", "E2", "FS")


def default_config_dict() -> dict:
    return {
        "horizon": 50,
        "discount": 0.975,
        "rebuild_cost": 1.0,
        "replacement_cost_fraction": 0.10,
        "partial_repair_fractions": dict(PARTIAL_REPAIR_FRACTIONS),
        "inspection_cost_fraction": 0.015,
        "rate_horizon": DEFAULT_RATE_HORIZON,
        "topology": {
            "links": [[1, 2, 3], [4, 5], [6, 7], [8, 9, 10]],
            "cut_sets": [[1, 3], [2, 4]],
            "types": ["I", "I", "III", "III", "I", "II", "II", "III", "III", "I"],
        },
        "losses": {
            "perpetual": {"E0": 0.0, "E1": 0.05, "E2": 0.25, "FS": 2.5},
            "instantaneous": {"E0": 0.0, "E1": 1.0, "E2": 5.0, "FS": 50.0},
        },
        "budget": None,
        "soft_constraints": [],
        "initial_belief": None,
        "rate_tables": None,
        "shutdown_accounting": "literal",
        "training": {
            "episodes": 2000,
            "batch_size": 32,
            "buffer_capacity": 300_000,
            "actor_hidden": [50, 50],
            "critic_hidden": [150, 150],
            "explore_start": 1.0,
            "explore_end": 0.01,
            "explore_anneal_episodes": 2500,
            "critic_lr": 1.0e-3,
            "actor_lr": 1.0e-4,
            "lr_drop_factor": 0.1,
            "lr_drop_episode": None,
            "dual_lr": 1.0e-5,
            "weight_clip": 2.0,
            "updates_per_step": 1,
        },
    }


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


class ConfigError(ValueError):
    """The configuration file or overrides are invalid."""


def load_config(path: str | None) -> dict:
    """Defaults merged with an optional YAML file."""
    config = default_config_dict()
    if path is None:
        return config
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    if data is None:
        return config
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping at top level")
    unknown = set(data) - set(config)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return _deep_merge(config, data)


def _det_type(label: str, rate_tables: dict | None) -> DeteriorationType:
    if rate_tables and label in rate_tables:
        entry = rate_tables[label]
        return DeteriorationType(
            label,
            tuple(entry["initial"]),
            tuple(entry["final"]),
            tuple(entry["failure"]),
        )
    return builtin_type(label)


def topology_from_dict(d: dict) -> Topology:
    """Component and link ids are 1-based in configuration files."""
    links = tuple(frozenset(c - 1 for c in link) for link in d["links"])
    cut_sets = tuple(frozenset(l - 1 for l in cut) for cut in d["cut_sets"])
    return Topology(links, cut_sets, tuple(d["types"]))


def env_config_from_dict(d: dict) -> EnvConfig:
    try:
        topology = topology_from_dict(d["topology"])
        rebuild = float(d["rebuild_cost"])
        replacement = rebuild * float(d["replacement_cost_fraction"])
        partial_fractions = d["partial_repair_fractions"]
        inspection = replacement * float(d["inspection_cost_fraction"])
        rate_tables = d.get("rate_tables")
        models = []
        for label in topology.type_labels:
            models.append(
                ComponentModel(
                    det_type=_det_type(label, rate_tables),
                    rate_horizon=int(d["rate_horizon"]),
                    replacement_cost=replacement,
                    partial_repair_cost=replacement * float(partial_fractions[label]),
                    inspection_cost=inspection,
                )
            )
        per = rebuild * np.array([d["losses"]["perpetual"][k] for k in _EVENT_KEYS])
        inst = rebuild * np.array(
            [d["losses"]["instantaneous"][k] for k in _EVENT_KEYS]
        )
        losses = LossTable(per, inst, rebuild)
        budget = None
        if d.get("budget"):
            b = d["budget"]
            budget = BudgetSpec(
                cap=float(b["cap"]),
                cycle_length=int(b["cycle_length"]),
                discounted_accounting=bool(b.get("discounted_accounting", True)),
            )
        soft = tuple(
            SoftConstraintSpec(
                kind=s["kind"],
                threshold=float(s["threshold"]),
                multiplier=float(s.get("multiplier", 0.0)),
                critical_value=(
                    float(s["critical_value"]) if "critical_value" in s else None
                ),
            )
            for s in d.get("soft_constraints") or []
        )
        initial = d.get("initial_belief")
        return EnvConfig(
            topology=topology,
            models=tuple(models),
            obs_model=default_observation_model(),
            losses=losses,
            horizon=int(d["horizon"]),
            discount=float(d["discount"]),
            budget=budget,
            soft_constraints=soft,
            initial_belief=None if initial is None else np.asarray(initial, float),
            shutdown_accounting=d.get("shutdown_accounting", "literal"),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid environment configuration: {exc}") from exc


def train_config_from_dict(d: dict) -> TrainConfig:
    t = d["training"]
    try:
        return TrainConfig(
            episodes=int(t["episodes"]),
            batch_size=int(t["batch_size"]),
            buffer_capacity=int(t["buffer_capacity"]),
            actor_hidden=tuple(t["actor_hidden"]),
            critic_hidden=tuple(t["critic_hidden"]),
            explore_start=float(t["explore_start"]),
            explore_end=float(t["explore_end"]),
            explore_anneal_episodes=int(t["explore_anneal_episodes"]),
            critic_lr=float(t["critic_lr"]),
            actor_lr=float(t["actor_lr"]),
            lr_drop_factor=float(t["lr_drop_factor"]),
            lr_drop_episode=(
                None if t["lr_drop_episode"] is None else int(t["lr_drop_episode"])
            ),
            dual_lr=float(t["dual_lr"]),
            weight_clip=float(t["weight_clip"]),
            updates_per_step=int(t["updates_per_step"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid training configuration: {exc}") from exc


def default_env_config() -> EnvConfig:
    return env_config_from_dict(default_config_dict())


def apply_overrides(config: dict, overrides: dict[str, Any]) -> dict:
    """Apply dotted-path command-line overrides onto a config dict."""
    out = copy.deepcopy(config)
    for path, value in overrides.items():
        node = out
        parts = path.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return out
