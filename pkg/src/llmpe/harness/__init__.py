"""Experiment orchestration, metrics, ablation suites and HPO."""
from .config import ExperimentConfig, ModelConfig, config_from_dict, load_config, save_config
from .hpo import HPO_SPACE, hpo_search
from .metrics import (centered_mae, centered_mse, centered_r2, kendall_tau, paired_p_value,
                      quantile_slice, summarize)
from .runner import aggregate, final_values, read_results, run_experiment, run_student
from .suites import SUITES, run_suite

__all__ = [
    "ExperimentConfig", "HPO_SPACE", "ModelConfig", "SUITES", "aggregate", "centered_mae",
    "centered_mse", "centered_r2", "config_from_dict", "final_values", "hpo_search",
    "kendall_tau", "load_config", "paired_p_value", "quantile_slice", "read_results",
    "run_experiment", "run_student", "run_suite", "save_config", "summarize",
]
