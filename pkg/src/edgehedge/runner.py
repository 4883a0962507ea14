"""Training and lockstep policy evaluation on shared step realizations."""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Dict

import numpy as np

from . import baselines
from .config import RunConfig, Scenario, build_model, build_scenario, config_hash, training_params
from .domain import ActionSet, StepRecord, full_action
from .learner import RewardTargetClassifier, TrainResult, train_scheduler
from .metrics import build_report, window_average
from .policy import reward, target_latency
from .seeding import substream

SAFETAIL = "SafeTail"
Policy = Callable[[object, np.ndarray], ActionSet]


def run_training(cfg: RunConfig, base_dir=None, log_dir=None) -> tuple:
    """Train a fresh scheduler; returns ``(TrainResult, Scenario)``."""
    scenario = build_scenario(cfg, base_dir)
    n = cfg.sim.n
    model = build_model(cfg).initialize(scenario.encoder.n_features_in_, 2**n - 1)
    result = train_scheduler(scenario, model, training_params(cfg),
                             substream(cfg.seed, "env"), substream(cfg.seed, "learner-explore"),
                             log_dir=log_dir)
    if log_dir is not None:
        write_training_log(result, cfg, log_dir)
    return result, scenario


def write_training_log(result: TrainResult, cfg: RunConfig, log_dir) -> None:
    d = Path(log_dir)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "steps.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "action_index", "access_size", "reward", "achieved_latency",
                    "target_latency", "miss"])
        for i, r in enumerate(result.records):
            w.writerow([i, r.action.index, r.action.size, repr(r.reward), repr(r.achieved_latency),
                        repr(r.target_latency), int(r.miss)])
    summary = {
        "config_hash": config_hash(cfg),
        "steps": len(result.records),
        "training_rounds": len(result.losses),
        "round_loss": result.losses,
        "round_epsilon": result.epsilons,
        "windows": window_average(result.records, cfg.training.beta, cfg.sim.n),
    }
    (d / "train_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def scheduler_policy(model: RewardTargetClassifier, n: int) -> Policy:
    """Pure exploitation of a trained network."""
    def choose(state, x):
        return ActionSet.from_index(int(model.predict(x[None, :])[0]), n)
    return choose


def baseline_policies(n: int, seed: int, levels=baselines.REDUNDANCY_LEVELS) -> Dict[str, Policy]:
    policies: Dict[str, Policy] = {"Oracle": lambda state, x: full_action(n)}
    for x_ in levels:
        rng = substream(seed, f"baselines/rand-{x_}")
        policies[f"Rand-{x_}"] = lambda state, x, k=x_, g=rng: baselines.rand_x(k, n, g)
    for x_ in levels:
        policies[f"MinLoad-{x_}"] = lambda state, x, k=x_: baselines.min_load_x(k, state.servers)
    for x_ in levels:
        policies[f"MinProp-{x_}"] = lambda state, x, k=x_: baselines.min_prop_x(k, state.servers)
    return policies


def run_lockstep(scenario: Scenario, policies: Dict[str, Policy], episodes: int,
                 env_rng: np.random.Generator) -> Dict[str, list]:
    """Score every policy on the same per-step realizations."""
    env, encoder, rparams = scenario.env, scenario.encoder, scenario.reward_params
    out = {name: [] for name in policies}
    for _ in range(episodes):
        state = env.reset_episode(env_rng)
        for _ in range(env.cfg.steps_per_episode):
            x = encoder.transform([state])[0]
            real = env.realize_step(state, env_rng)
            tau = target_latency(env.user, env.service, state.servers)
            for name, choose in policies.items():
                action = choose(state, x)
                achieved, miss = env.achieved_latency(real, action)
                r = reward(achieved, tau, action.size, rparams)
                out[name].append(StepRecord(x, action, r, achieved, tau, real.per_server_latency, miss))
            state = env.advance(state, env_rng)
    return out


def _evaluate_seed(cfg: RunConfig, base_dir, model, eval_seed: int, with_baselines: bool) -> Dict[str, list]:
    scenario = build_scenario(cfg, base_dir)
    n = cfg.sim.n
    policies = {SAFETAIL: scheduler_policy(model, n)}
    if with_baselines:
        policies.update(baseline_policies(n, eval_seed))
    return run_lockstep(scenario, policies, cfg.sim.eval_episodes, substream(eval_seed, "eval-env"))


def evaluate(cfg: RunConfig, model: RewardTargetClassifier, base_dir=None, with_baselines: bool = True,
             parallel_seeds: int = 1, meta: dict | None = None) -> dict:
    """Evaluate on ``parallel_seeds`` independent seeds; merged in seed order."""
    seeds = [cfg.seed + i for i in range(parallel_seeds)]
    if parallel_seeds > 1:
        workers = min(parallel_seeds, os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_evaluate_seed, [cfg] * len(seeds), [base_dir] * len(seeds),
                                  [model] * len(seeds), seeds, [with_baselines] * len(seeds)))
    else:
        parts = [_evaluate_seed(cfg, base_dir, model, seeds[0], with_baselines)]
    merged = {name: [rec for part in parts for rec in part[name]] for name in parts[0]}
    info = {"config_hash": config_hash(cfg), "eval_seeds": seeds, **(meta or {})}
    return build_report(merged, cfg.sim.n, cfg.training.beta, info), merged
