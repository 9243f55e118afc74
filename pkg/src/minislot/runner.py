"""Glue between configs and artifacts: train, evaluate, compare.

Every entry point takes an :class:`ExperimentConfig` and an output
directory and leaves behind CSV files plus a manifest describing exactly
what produced them.  Evaluation methods all see the same per-trial user
profiles, so rows with the same trial index are directly comparable.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .agent import TrainResult, greedy_rollout, load_checkpoint, save_checkpoint, train
from .baselines import AllocationPlan, equal_bandwidth_plan, equal_time_frequency_plan
from .config import ExperimentConfig, to_dict
from .env import SchedulingEnv
from .oracle import OracleCaps, oracle_best_plan
from .outputs import write_eval_csv, write_manifest, write_training_csv
from .scenario import scenario_for_trial

DQN = "dqn"
EQUAL_BANDWIDTH = "equal_bandwidth"
EQUAL_TIME_FREQUENCY = "equal_time_frequency"
ORACLE = "oracle"
ALL_METHODS = (DQN, EQUAL_BANDWIDTH, EQUAL_TIME_FREQUENCY, ORACLE)


def build_env(config: ExperimentConfig, record_trace: bool = False) -> SchedulingEnv:
    return SchedulingEnv(config.scenario, reward=config.reward, record_trace=record_trace)


def _manifest(config: ExperimentConfig, command: str) -> dict:
    return {
        "version": __version__,
        "command": command,
        "seed": config.train.seed,
        "scenario_seed": config.scenario.rng_seed,
        "config": to_dict(config),
    }


def run_train(
    config: ExperimentConfig,
    out_dir: str,
    command: str = "train",
    on_episode=None,
) -> tuple[TrainResult, str]:
    """Train one policy; write training.csv, checkpoint.npz, manifest.json."""
    env = build_env(config)
    result = train(env, config.train, on_episode=on_episode)
    os.makedirs(out_dir, exist_ok=True)
    write_training_csv(os.path.join(out_dir, "training.csv"), result.metrics)
    checkpoint_path = os.path.join(out_dir, "checkpoint.npz")
    save_checkpoint(
        checkpoint_path,
        result.net,
        result.params,
        extra={
            "train_seed": config.train.seed,
            "scenario_seed": config.scenario.rng_seed,
            "episodes": config.train.episodes,
        },
    )
    write_manifest(os.path.join(out_dir, "manifest.json"), _manifest(config, command))
    return result, checkpoint_path


def _plan_row(trial: int, method: str, plan: AllocationPlan) -> dict:
    return {
        "trial": trial,
        "method": method,
        "total_qoe": plan.total_qoe,
        "served_count": plan.served_count,
        "per_ue_qoe": [r.counted_qoe for r in plan.reports],
    }


def _oracle_trial(args) -> dict:
    config, trial, caps = args
    profiles = scenario_for_trial(config.scenario, trial)
    result = oracle_best_plan(config.scenario, profiles, caps)
    return _plan_row(trial, ORACLE, result.plan)


def run_eval(
    config: ExperimentConfig,
    out_dir: str,
    methods=(EQUAL_BANDWIDTH, EQUAL_TIME_FREQUENCY, DQN),
    checkpoint: str | None = None,
    n_trials: int | None = None,
    oracle_caps: OracleCaps | None = None,
    jobs: int = 1,
    command: str = "eval",
    filename: str = "eval.csv",
) -> list[dict]:
    """Evaluate the requested methods on a shared set of sampled trials."""
    unknown = set(methods) - set(ALL_METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    n_trials = config.n_eval_trials if n_trials is None else n_trials

    rows: list[dict] = []
    if DQN in methods:
        if checkpoint is None:
            raise ValueError("dqn evaluation needs a checkpoint")
        net, params, _ = load_checkpoint(checkpoint)
        env = build_env(config)
        for trial in range(n_trials):
            profiles = scenario_for_trial(config.scenario, trial)
            roll = greedy_rollout(env, net, params, profiles=profiles)
            rows.append(
                {
                    "trial": trial,
                    "method": DQN,
                    "total_qoe": roll.total_qoe,
                    "served_count": sum(roll.served),
                    "per_ue_qoe": list(roll.per_ue_qoe),
                }
            )
    for trial in range(n_trials):
        profiles = scenario_for_trial(config.scenario, trial)
        if EQUAL_BANDWIDTH in methods:
            rows.append(
                _plan_row(trial, EQUAL_BANDWIDTH, equal_bandwidth_plan(config.scenario, profiles))
            )
        if EQUAL_TIME_FREQUENCY in methods:
            rows.append(
                _plan_row(
                    trial, EQUAL_TIME_FREQUENCY, equal_time_frequency_plan(config.scenario, profiles)
                )
            )
    if ORACLE in methods:
        tasks = [(config, trial, oracle_caps) for trial in range(n_trials)]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                rows.extend(pool.map(_oracle_trial, tasks))
        else:
            rows.extend(_oracle_trial(t) for t in tasks)

    rows.sort(key=lambda r: (r["trial"], r["method"]))
    os.makedirs(out_dir, exist_ok=True)
    write_eval_csv(os.path.join(out_dir, filename), rows)
    write_manifest(os.path.join(out_dir, "manifest.json"), _manifest(config, command))
    return rows
