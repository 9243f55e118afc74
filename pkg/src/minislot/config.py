"""Experiment configuration: JSON round-trip and environment overrides.

One :class:`ExperimentConfig` bundles everything a run needs — the
scenario, the reward shaping, and the training hyper-parameters — so a
single file pins a whole experiment.  Values can be overridden from the
process environment with ``MINISLOT_``-prefixed variables using ``__`` as
a path separator, e.g. ``MINISLOT_TRAIN__EPISODES=100`` or
``MINISLOT_SCENARIO__GRID__MU_MIN=1``.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace

from .agent import TrainConfig
from .env import RewardParams
from .grid import GridSpec
from .radio import LinkParams
from .scenario import FovModel, ScenarioConfig, tiny_config

ENV_PREFIX = "MINISLOT_"


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    reward: RewardParams = field(default_factory=RewardParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    n_eval_trials: int = 20
    output_dir: str = "runs"


def default_experiment(**overrides) -> ExperimentConfig:
    return replace(ExperimentConfig(), **overrides) if overrides else ExperimentConfig()


def tiny_experiment(**overrides) -> ExperimentConfig:
    cfg = ExperimentConfig(
        scenario=tiny_config(),
        train=TrainConfig(episodes=300, train_start_size=64),
    )
    return replace(cfg, **overrides) if overrides else cfg


def to_dict(config: ExperimentConfig) -> dict:
    return asdict(config)


def _scenario_from_dict(raw: dict) -> ScenarioConfig:
    data = dict(raw)
    data["grid"] = GridSpec(**data["grid"])
    data["link"] = LinkParams(**data["link"])
    data["fov"] = FovModel(**data["fov"])
    for key in ("numerology_set", "minislot_set", "min_qoe"):
        data[key] = tuple(data[key])
    return ScenarioConfig(**data)


def from_dict(raw: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig(
            scenario=_scenario_from_dict(raw["scenario"]),
            reward=RewardParams(**raw["reward"]),
            train=TrainConfig(**raw["train"]),
            n_eval_trials=int(raw["n_eval_trials"]),
            output_dir=str(raw["output_dir"]),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed experiment config: {exc}") from exc


def save_config(path, config: ExperimentConfig) -> None:
    with open(path, "w") as fh:
        json.dump(to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return from_dict(json.load(fh))


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text  # bare strings ("runs/x") need no quoting


def apply_env_overrides(
    config: ExperimentConfig, environ: dict[str, str] | None = None
) -> ExperimentConfig:
    """Fold ``MINISLOT_*`` variables into the config; unknown paths raise."""
    environ = os.environ if environ is None else environ
    data = to_dict(config)
    for name, value in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        path = name[len(ENV_PREFIX):].lower().split("__")
        node = data
        for part in path[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ValueError(f"unknown config path in {name}")
            node = node[part]
        if not isinstance(node, dict) or path[-1] not in node:
            raise ValueError(f"unknown config path in {name}")
        node[path[-1]] = _coerce(value)
    return from_dict(data)
