"""Per-student pipeline and experiment-level orchestration.

Each student gets independent random streams derived from the master seed
and the student id, so students can run in any order or in parallel and
still produce identical records.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..acquisition import CandidatePool, QueryHistory, select_query
from ..domain import (Bundle, StudentProfile, best_bundle, corrupt, generate_profile,
                      sample_bundles)
from ..estimator import MVNNEnsembleRegressor
from ..proxy.llm import LlmProxy, make_backend
from ..proxy.narrative import generate_narrative
from ..proxy.records import TranscriptStore
from ..proxy.simulated import simulated_answer
from .config import ExperimentConfig
from .metrics import METRIC_NAMES, learning_metrics, quantile_slice, summarize

logger = logging.getLogger(__name__)

RESULT_SCHEMA_VERSION = 1
STREAMS = ("profile", "mistakes", "regression", "model", "acquisition", "proxy", "evaluation")


def student_streams(master_seed: int, student_id: int) -> dict:
    """Independent seed sequences for every random component of one student."""
    root = np.random.SeedSequence(master_seed, spawn_key=(student_id,))
    return dict(zip(STREAMS, root.spawn(len(STREAMS))))


def quantile_key(q: float) -> str:
    return f"{q:g}"


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_clean(v) for v in x]
    return x


def run_student(config: ExperimentConfig, student_id: int, profile: StudentProfile | None = None,
                backend=None, store: TranscriptStore | None = None) -> dict:
    """Run the full pipeline for one student and return its result record.

    ``profile`` overrides the generated ground truth. ``backend`` is the chat
    backend used when the proxy runs in ``llm`` mode (built from
    ``config.proxy`` when omitted).
    """
    catalog = config.catalog
    seeds = student_streams(config.seed, student_id)
    if profile is None:
        profile = generate_profile(catalog, seeds["profile"])
    report = corrupt(profile, config.mistakes, seeds["mistakes"])

    gui_bundle, _ = best_bundle(report.value, catalog)
    gui_x = gui_bundle.incidence(catalog.num_courses)[None, :].astype(float)
    gui_value = float(profile.value(gui_x)[0])
    if gui_value <= 0:
        raise ValueError(f"student {student_id}: GUI bundle has nonpositive true value")
    _, optimal_value = best_bundle(profile.value, catalog)

    reg_rng = np.random.default_rng(seeds["regression"])
    X_reg = sample_bundles(catalog, config.num_regression_bundles, reg_rng)
    model_seed = int(seeds["model"].generate_state(1)[0])
    est = MVNNEnsembleRegressor(random_state=model_seed, **config.model.estimator_kwargs())
    est.fit(X_reg, report.value(X_reg))

    eval_rng = np.random.default_rng(seeds["evaluation"])
    X_eval = sample_bundles(catalog, config.num_eval_bundles, eval_rng)
    y_eval = profile.value(X_eval)

    def grid_entry(t: int) -> dict:
        if t == 0:
            bundle, value = gui_bundle, gui_value
        else:
            bundle, _ = best_bundle(est.predict, catalog)
            value = float(profile.value(bundle.incidence(catalog.num_courses)[None, :])[0])
        pred = est.predict(X_eval)
        metrics = {quantile_key(q): (learning_metrics(pred, y_eval) if q == 1.0
                                     else quantile_slice(pred, y_eval, q))
                   for q in config.quantiles}
        return {"num_cqs": t, "bundle": list(bundle.courses), "true_value": value,
                "normalized_value": 100.0 * value / gui_value, "metrics": metrics}

    grid = set(config.eval_grid)
    entries = [grid_entry(0)] if 0 in grid else []

    acq_rng = np.random.default_rng(seeds["acquisition"])
    proxy_rng = np.random.default_rng(seeds["proxy"])
    proxy = narrative = None
    if config.proxy.mode == "llm":
        backend = backend if backend is not None else make_backend(config.proxy)
        proxy = LlmProxy(backend, config.proxy, store if store is not None else TranscriptStore())
        narrator = backend if config.narrator == "llm" else None
        narrative = generate_narrative(profile, config.narrative_brevity, narrator,
                                       student_id).text

    history = QueryHistory()
    X1, X2, labels = [], [], []
    n_correct = n_scored = n_flagged = 0

    def sample_pool(rng):
        return CandidatePool.sample(catalog, config.pool_size, rng)

    t = 0
    while t < config.num_cqs:
        next_tune = (t // config.finetune_every + 1) * config.finetune_every
        next_grid = min((g for g in grid if g > t), default=config.num_cqs)
        stop = min(next_tune, next_grid, config.num_cqs)
        pairs = []
        for _ in range(stop - t):
            a, b = select_query(config.acquisition, est.bt_utilities, sample_pool, history, acq_rng)
            history.add(a, b)
            pairs.append((Bundle.from_incidence(a), Bundle.from_incidence(b)))
        if proxy is None:
            records = [simulated_answer(profile, a, b, config.proxy.accuracy, proxy_rng)
                       for a, b in pairs]
        else:
            records = proxy.answer_many(narrative, pairs, proxy_rng, first_query_id=t)
        for (a, b), rec in zip(pairs, records):
            xa = a.incidence(catalog.num_courses).astype(float)
            xb = b.incidence(catalog.num_courses).astype(float)
            X1.append(xa)
            X2.append(xb)
            labels.append(rec.label)
            if rec.flagged:
                n_flagged += 1
                continue
            va, vb = profile.value(np.stack([xa, xb]))
            n_scored += 1
            n_correct += va == vb or (rec.answer == "A") == (va > vb)
        t = stop
        if t % config.finetune_every == 0 or t == config.num_cqs:
            est.fit_comparisons(np.array(X1), np.array(X2), np.array(labels))
        if t in grid:
            entries.append(grid_entry(t))

    return _clean({
        "schema_version": RESULT_SCHEMA_VERSION,
        "experiment": config.name,
        "student_id": student_id,
        "gui_bundle": list(gui_bundle.courses),
        "gui_value": gui_value,
        "optimal_value": float(optimal_value),
        "grid": entries,
        "n_queries": len(labels),
        "n_flagged": n_flagged,
        "proxy_accuracy": (n_correct / n_scored) if n_scored else None,
    })


def final_values(records, num_cqs: int | None = None) -> np.ndarray:
    """Normalized values at ``num_cqs`` (default: each record's last grid point), by student id."""
    out = []
    for rec in sorted(records, key=lambda r: r["student_id"]):
        entries = rec["grid"]
        if num_cqs is None:
            out.append(entries[-1]["normalized_value"])
        else:
            out.append(next(e["normalized_value"] for e in entries if e["num_cqs"] == num_cqs))
    return np.asarray(out, dtype=float)


def aggregate(records, label: str | None = None) -> list[dict]:
    """One summary row per grid point."""
    if not records:
        return []
    rows = []
    grid = [e["num_cqs"] for e in records[0]["grid"]]
    accs = [r["proxy_accuracy"] for r in records if r["proxy_accuracy"] is not None]
    for t in grid:
        vals = final_values(records, t)
        row = {"experiment": label or records[0]["experiment"], "num_cqs": t}
        s = summarize(vals)
        row.update({"n": s["n"], "mean_normalized_value": s["mean"], "ci95": s["ci95"],
                    "pct_better": s["pct_better"], "pct_worse": s["pct_worse"],
                    "p_value": s["p_value"]})
        row["mean_proxy_accuracy"] = float(np.mean(accs)) if accs else None
        for q in records[0]["grid"][0]["metrics"]:
            for m in METRIC_NAMES:
                xs = [next(e for e in r["grid"] if e["num_cqs"] == t)["metrics"][q][m]
                      for r in records]
                xs = [x for x in xs if x is not None]
                row[f"{m}@{q}"] = float(np.mean(xs)) if xs else None
        rows.append(row)
    return rows


def write_csv(rows: list[dict], path, schema_version: int = RESULT_SCHEMA_VERSION) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={schema_version}\n")
        if not rows:
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else (repr(v) if isinstance(v, float) else v))
                             for k, v in row.items()})


def read_csv(path) -> list[dict]:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# schema_version="):
            raise ValueError(f"{path} lacks a schema header")
        return list(csv.DictReader(fh))


def read_results(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        return []
    out = []
    for line in path.read_text().splitlines():
        if line.strip():
            rec = json.loads(line)
            if rec.get("schema_version") != RESULT_SCHEMA_VERSION:
                raise ValueError(f"unsupported result schema_version {rec.get('schema_version')}")
            out.append(rec)
    return out


def _student_job(args):
    config, sid = args
    return run_student(config, sid)


def run_experiment(config: ExperimentConfig, out_dir=None, backend=None, workers: int = 1,
                   resume: bool = True) -> list[dict]:
    """Run every student, appending each record to ``results.jsonl`` as it finishes.

    With ``resume`` an existing results file is kept and only missing
    students run, so an interrupted run (for example a proxy outage) can be
    restarted. The summary CSV is rewritten at the end.
    """
    out = Path(out_dir) if out_dir is not None else None
    done: dict[int, dict] = {}
    results_path = store = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
        results_path = out / "results.jsonl"
        if resume:
            done = {r["student_id"]: r for r in read_results(results_path)}
        elif results_path.exists():
            results_path.unlink()
        if config.proxy.mode == "llm":
            store = TranscriptStore(out / "transcripts.jsonl")
    todo = [s for s in range(config.num_students) if s not in done]

    def emit(rec):
        done[rec["student_id"]] = rec
        if results_path is not None:
            with open(results_path, "a") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    if workers > 1 and config.proxy.mode == "simulated" and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(_student_job, [(config, s) for s in todo]):
                emit(rec)
    else:
        for sid in todo:
            emit(run_student(config, sid, backend=backend, store=store))
            logger.info("%s: student %d done", config.name, sid)

    records = [done[s] for s in sorted(done)]
    if out is not None:
        write_csv(aggregate(records), out / "summary.csv")
    return records
