"""Experiment configuration and its file format.

Config files are YAML or JSON mappings whose keys mirror
:class:`ExperimentConfig`; nested sections ``catalog``, ``mistakes``,
``model`` and ``proxy`` map onto their own dataclasses. Unknown keys are
rejected so typos fail loudly.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from ..acquisition import ACQUISITIONS
from ..domain import CourseCatalog, MistakeProfile
from ..proxy.llm import ProxyConfig
from ..proxy.prompts import BREVITY_WORDS

CONFIG_SCHEMA_VERSION = 1


@dataclass
class ModelConfig:
    """Keyword arguments for :class:`~llmpe.estimator.MVNNEnsembleRegressor`."""

    hidden_widths: tuple = (20, 20)
    cutoff: float = 1.0
    n_members: int = 10
    reg_epochs: int = 500
    reg_lr: float = 0.01
    reg_l2: float = 1e-5
    class_epochs: int = 10
    class_lr: float = 1e-3
    class_l2: float = 1e-4
    class_batch_size: int = 1
    grad_clip_norm: float = 0.2
    loss: str = "gce"
    q: float = 0.3
    comparison_scale: float | None = 10.0
    finetune_from: str = "regression"

    def __post_init__(self):
        self.hidden_widths = tuple(self.hidden_widths)

    def estimator_kwargs(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentConfig:
    name: str = "main"
    num_students: int = 50
    seed: int = 0
    catalog: CourseCatalog = field(default_factory=CourseCatalog)
    mistakes: MistakeProfile = field(default_factory=MistakeProfile)
    model: ModelConfig = field(default_factory=ModelConfig)
    acquisition: str = "doublets"
    proxy: ProxyConfig = field(default_factory=ProxyConfig)
    narrative_brevity: str = "baseline"
    narrator: str = "rule"
    num_cqs: int = 500
    eval_grid: tuple = (0, 100, 200, 300, 400, 500)
    finetune_every: int = 10
    quantiles: tuple = (1.0, 0.10, 0.05)
    num_regression_bundles: int = 500
    num_eval_bundles: int = 2000
    pool_size: int = 512

    def __post_init__(self):
        self.eval_grid = tuple(sorted(set(int(g) for g in self.eval_grid)))
        self.quantiles = tuple(float(q) for q in self.quantiles)
        if self.num_students < 1:
            raise ValueError("num_students must be positive")
        if self.num_cqs < 0:
            raise ValueError("num_cqs must be nonnegative")
        if not self.eval_grid or self.eval_grid[0] < 0 or self.eval_grid[-1] > self.num_cqs:
            raise ValueError(f"eval grid {self.eval_grid} must lie within [0, {self.num_cqs}]")
        if self.acquisition not in ACQUISITIONS:
            raise ValueError(f"acquisition must be one of {ACQUISITIONS}")
        if self.narrative_brevity not in BREVITY_WORDS:
            raise ValueError(f"narrative_brevity must be one of {tuple(BREVITY_WORDS)}")
        if self.narrator not in ("rule", "llm"):
            raise ValueError("narrator must be 'rule' or 'llm'")
        if self.finetune_every < 1 or self.pool_size < 2:
            raise ValueError("finetune_every must be >= 1 and pool_size >= 2")
        if any(not 0.0 < q <= 1.0 for q in self.quantiles):
            raise ValueError("quantiles must lie in (0, 1]")

    def with_overrides(self, **changes) -> "ExperimentConfig":
        """Copy with top-level fields or dotted nested fields (``model.loss``) replaced."""
        top, nested = {}, {}
        for key, value in changes.items():
            if "." in key:
                section, sub = key.split(".", 1)
                nested.setdefault(section, {})[sub] = value
            else:
                top[key] = value
        for section, sub in nested.items():
            top[section] = replace(top.get(section, getattr(self, section)), **sub)
        return replace(self, **top)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = CONFIG_SCHEMA_VERSION
        return _plain(d)


_SECTIONS = {"catalog": CourseCatalog, "mistakes": MistakeProfile, "model": ModelConfig,
             "proxy": ProxyConfig}


def config_from_dict(d: dict) -> ExperimentConfig:
    d = dict(d)
    version = d.pop("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ValueError(f"unsupported config schema_version {version}")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for name, cls in _SECTIONS.items():
        if name in d and isinstance(d[name], dict):
            allowed = {f.name for f in fields(cls)}
            bad = set(d[name]) - allowed
            if bad:
                raise ValueError(f"unknown keys in {name!r}: {sorted(bad)}")
            d[name] = cls(**d[name])
    return ExperimentConfig(**d)


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        data = json.loads(text)
    else:
        data = yaml.safe_load(text)
    return config_from_dict(data or {})


def save_config(config: ExperimentConfig, path) -> None:
    data = config.to_dict()
    if str(path).endswith(".json"):
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    else:
        Path(path).write_text(yaml.safe_dump(data, sort_keys=True))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj
