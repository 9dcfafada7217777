"""Random-search hyperparameter optimisation with a simulated proxy."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Callable

import numpy as np

from ..acquisition import ACQUISITIONS
from .config import ExperimentConfig
from .runner import final_values, run_experiment

# choice lists are sampled uniformly; (lo, hi, "log"|"linear") tuples continuously
HPO_SPACE = {
    "model.class_batch_size": [1, 2, 4, 8, 16, 32],
    "model.class_epochs": [2, 5, 10, 20, 50, 100, 200, 500, 1000],
    "model.class_lr": (1e-4, 0.1, "log"),
    "model.class_l2": [0.0, 1e-8, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
    "model.grad_clip_norm": [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0],
    "model.q": (0.001, 1.0, "linear"),
    "num_cqs": [200, 300, 500],
    "acquisition": list(ACQUISITIONS),
}

HPO_SEED_OFFSET = 1_000_003


def sample_trial(space: dict, rng) -> dict:
    trial = {}
    for key in sorted(space):
        spec = space[key]
        if isinstance(spec, tuple):
            lo, hi, kind = spec
            if kind == "log":
                trial[key] = float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
            else:
                trial[key] = float(rng.uniform(lo, hi))
        else:
            v = spec[int(rng.integers(len(spec)))]
            trial[key] = v.item() if isinstance(v, np.generic) else v
    return trial


def apply_trial(config: ExperimentConfig, trial: dict) -> ExperimentConfig:
    changes = dict(trial)
    if "num_cqs" in changes:
        changes["eval_grid"] = (0, int(changes["num_cqs"]))
    return config.with_overrides(**changes)


def default_objective(config: ExperimentConfig) -> float:
    return float(final_values(run_experiment(config)).mean())


def hpo_search(config: ExperimentConfig, budget: int, rng=None, n_seeds: int = 10,
               space: dict | None = None, objective: Callable[[ExperimentConfig], float] | None = None,
               log_path=None) -> tuple[dict, list[dict]]:
    """Random search; returns the best trial and the full trial log.

    Each trial is scored by ``objective`` (default: mean final normalized
    value over ``n_seeds`` students drawn from a seed range disjoint from
    the experiments). The earliest trial wins ties.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = np.random.default_rng(rng)
    space = HPO_SPACE if space is None else space
    objective = objective or default_objective
    base = config.with_overrides(num_students=n_seeds, seed=config.seed + HPO_SEED_OFFSET,
                                 **{"proxy.mode": "simulated"})
    trials = []
    best = None
    for i in range(budget):
        trial = sample_trial(space, rng)
        score = float(objective(apply_trial(base, trial)))
        entry = {"trial": i, "params": trial, "objective": score}
        trials.append(entry)
        if log_path is not None:
            with open(Path(log_path), "a") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
        if best is None or score > best["objective"]:
            best = entry
    return best, trials
