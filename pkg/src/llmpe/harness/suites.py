"""Named ablation suites: each is a list of cells overriding the base config.

Every cell reuses the base master seed, so the same students (profiles,
GUI mistakes and random streams) appear in every cell and cells can be
compared with paired tests.
"""
from __future__ import annotations

from pathlib import Path

from ..acquisition import ACQUISITIONS
from .config import ExperimentConfig
from .metrics import paired_p_value, summarize
from .runner import final_values, run_experiment, write_csv

GAMMA_GRID = (0.5, 0.75, 0.9, 1.0, 1.1, 1.25)
ACCURACY_GRID = (0.55, 0.60, 0.65, 0.70)

SUITES = {
    "main": [("main", {})],
    "noise_gamma": [(f"gamma={g:g}", {"mistakes.gamma": g}) for g in GAMMA_GRID],
    "cot": [("cot=on", {"proxy.cot_enabled": True}), ("cot=off", {"proxy.cot_enabled": False})],
    "gce_vs_bce": [("gce", {"model.loss": "gce"}), ("bce", {"model.loss": "bce"})],
    "acquisition": [(a, {"acquisition": a}) for a in ACQUISITIONS],
    "accuracy_grid": [(f"accuracy={p:g}", {"proxy.mode": "simulated", "proxy.accuracy": p})
                      for p in ACCURACY_GRID],
}


def suite_cells(config: ExperimentConfig, suite: str) -> list[tuple[str, ExperimentConfig]]:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {tuple(SUITES)}")
    return [(label, config.with_overrides(name=label, **changes))
            for label, changes in SUITES[suite]]


def suite_table(cell_records: list[tuple[str, list[dict]]]) -> list[dict]:
    """One row per cell, evaluated at each cell's final grid point.

    ``p_value`` tests the cell mean against the GUI baseline of 100;
    ``p_first_better`` is the paired p-value that the first cell beats
    this one.
    """
    rows = []
    first = final_values(cell_records[0][1]) if cell_records else None
    for label, records in cell_records:
        vals = final_values(records)
        s = summarize(vals)
        accs = [r["proxy_accuracy"] for r in records if r["proxy_accuracy"] is not None]
        rows.append({
            "cell": label, "num_cqs": records[0]["grid"][-1]["num_cqs"], "n": s["n"],
            "mean_normalized_value": s["mean"], "ci95": s["ci95"],
            "pct_better": s["pct_better"], "pct_worse": s["pct_worse"], "p_value": s["p_value"],
            "p_first_better": (paired_p_value(first, vals)
                               if len(vals) == len(first) else None),
            "mean_proxy_accuracy": sum(accs) / len(accs) if accs else None,
        })
    return rows


def run_suite(config: ExperimentConfig, suite: str, out_dir=None, backend_factory=None,
              workers: int = 1, resume: bool = True) -> list[dict]:
    """Run every cell of ``suite`` and return (and write) its summary table.

    ``backend_factory(cell_config)`` supplies the chat backend for cells
    whose proxy runs in ``llm`` mode.
    """
    out = Path(out_dir) if out_dir is not None else None
    cell_records = []
    for label, cell in suite_cells(config, suite):
        backend = backend_factory(cell) if backend_factory is not None else None
        cell_dir = out / suite / _slug(label) if out is not None else None
        records = run_experiment(cell, cell_dir, backend=backend, workers=workers, resume=resume)
        cell_records.append((label, records))
    rows = suite_table(cell_records)
    if out is not None:
        write_csv(rows, out / f"{suite}.csv")
    return rows


def _slug(label: str) -> str:
    return label.replace("=", "_").replace(".", "p")
