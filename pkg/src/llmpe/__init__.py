"""Preference elicitation with monotone value networks and LLM proxies.

Subpackages: :mod:`llmpe.domain` (students and bundles), :mod:`llmpe.mvnn`
(monotone networks), :mod:`llmpe.training` (mixed training),
:mod:`llmpe.acquisition` (query selection), :mod:`llmpe.proxy` (simulated
and LLM answerers) and :mod:`llmpe.harness` (experiments and CLI).
"""
from .domain import (Bundle, CourseCatalog, MistakeProfile, StudentProfile, best_bundle, corrupt,
                     generate_profile, reported_value, true_value)
from .estimator import MVNNEnsembleRegressor

__version__ = "0.1.0"

__all__ = [
    "Bundle", "CourseCatalog", "MVNNEnsembleRegressor", "MistakeProfile", "StudentProfile",
    "best_bundle", "corrupt", "generate_profile", "reported_value", "true_value",
]
