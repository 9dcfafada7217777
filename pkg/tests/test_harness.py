import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from llmpe.domain import CourseCatalog, MistakeProfile
from llmpe.harness import cli
from llmpe.harness.config import (ExperimentConfig, ModelConfig, config_from_dict, load_config,
                                  save_config)
from llmpe.harness.hpo import HPO_SPACE, apply_trial, hpo_search, sample_trial
from llmpe.harness.metrics import (centered_mae, centered_mse, centered_r2, kendall_tau,
                                   learning_metrics, paired_p_value, quantile_slice, summarize,
                                   top_fraction_index)
from llmpe.harness.runner import (aggregate, final_values, read_csv, read_results, run_experiment,
                                  run_student, student_streams)
from llmpe.harness.suites import SUITES, run_suite, suite_cells, suite_table
from llmpe.proxy import StubBackend


def tiny(**changes):
    base = ExperimentConfig(
        name="tiny", num_students=2, num_cqs=20, eval_grid=(0, 10, 20),
        model=ModelConfig(hidden_widths=(8, 8), n_members=2, reg_epochs=50),
        num_regression_bundles=100, num_eval_bundles=200, pool_size=64)
    return base.with_overrides(**changes) if changes else base


# metrics

def test_centered_metric_examples():
    assert centered_mae([0, 2], [0, 0]) == 1.0
    assert centered_mse([0, 2], [0, 0]) == 1.0
    assert centered_mae([5.0], [1.0]) == 0.0
    true = np.array([1.0, 4.0, 2.0, 8.0])
    assert centered_mae(true + 1000, true) == pytest.approx(0.0, abs=1e-12)
    assert centered_r2(true - 7, true) == pytest.approx(1.0)
    assert np.isnan(centered_r2([1, 2], [3, 3]))


def test_kendall_tau_examples():
    assert kendall_tau([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert kendall_tau([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert kendall_tau([1, 2, 3], [1, 3, 2]) == pytest.approx(1 / 3)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30),
       st.floats(-1e6, 1e6))
def test_centered_metrics_shift_invariant(vals, c):
    rng = np.random.default_rng(len(vals))
    true = np.asarray(vals)
    pred = true + rng.normal(size=len(vals))
    assert centered_mae(pred + c, true) == pytest.approx(centered_mae(pred, true), abs=1e-6)
    assert centered_mse(pred + c, true) == pytest.approx(centered_mse(pred, true), abs=1e-6)


def test_top_fraction_nested_and_sized():
    true = np.random.default_rng(0).normal(size=2000)
    top10, top5 = top_fraction_index(true, 0.10), top_fraction_index(true, 0.05)
    assert len(top10) == 200 and len(top5) == 100
    assert set(top5) <= set(top10)
    assert set(top_fraction_index([1.0, 4.0, 3.0, 2.0], 0.5)) == {1, 2}
    with pytest.raises(ValueError):
        top_fraction_index(true, 0.0)


def test_quantile_slice_full_fraction_is_identity():
    rng = np.random.default_rng(1)
    true = rng.normal(size=50)
    pred = true + rng.normal(size=50)
    assert quantile_slice(pred, true, 1.0) == learning_metrics(pred, true)


def test_summary_matches_scipy():
    x = np.random.default_rng(2).normal(103, 8, size=37)
    s = summarize(x)
    ref = stats.ttest_1samp(x, 100.0, alternative="greater")
    assert s["p_value"] == pytest.approx(ref.pvalue, abs=1e-6)
    lo, hi = stats.t.interval(0.95, len(x) - 1, loc=x.mean(), scale=stats.sem(x))
    assert s["ci95"] == pytest.approx((hi - lo) / 2, rel=1e-9)
    assert s["pct_better"] + s["pct_worse"] == pytest.approx(100.0)


def test_paired_p_matches_scipy():
    rng = np.random.default_rng(3)
    a = rng.normal(110, 10, 50)
    b = a - rng.normal(2, 5, 50)
    ref = stats.ttest_rel(a, b, alternative="greater").pvalue
    assert paired_p_value(a, b) == pytest.approx(ref, abs=1e-6)


def test_degenerate_summaries():
    one = summarize([120.0])
    assert one["ci95"] == 0.0 and one["p_value"] == 1.0
    assert summarize([105.0, 105.0])["p_value"] == 0.0
    assert summarize([95.0, 95.0])["p_value"] == 1.0
    with pytest.raises(ValueError):
        summarize([])


# config

@pytest.mark.parametrize("suffix", [".yaml", ".json"])
def test_config_file_roundtrip(tmp_path, suffix):
    cfg = tiny(**{"model.loss": "bce", "proxy.accuracy": 0.6, "mistakes.gamma": 0.5})
    path = tmp_path / f"c{suffix}"
    save_config(cfg, path)
    assert load_config(path) == cfg


def test_config_rejects_unknown_keys_and_bad_grids():
    with pytest.raises(ValueError):
        config_from_dict({"num_studnets": 3})
    with pytest.raises(ValueError):
        config_from_dict({"model": {"lossy": "gce"}})
    with pytest.raises(ValueError):
        ExperimentConfig(num_cqs=100, eval_grid=(0, 200))
    with pytest.raises(ValueError):
        ExperimentConfig(acquisition="ucb")


def test_overrides_leave_original_untouched():
    cfg = ExperimentConfig()
    new = cfg.with_overrides(**{"model.q": 0.7, "seed": 9})
    assert new.model.q == 0.7 and new.seed == 9 and cfg.model.q == 0.3


# runner

def test_student_streams_are_disjoint_and_stable():
    a = student_streams(0, 1)
    b = student_streams(0, 1)
    c = student_streams(0, 2)
    assert a["model"].generate_state(2).tolist() == b["model"].generate_state(2).tolist()
    assert a["model"].generate_state(2).tolist() != c["model"].generate_state(2).tolist()
    assert a["model"].generate_state(2).tolist() != a["proxy"].generate_state(2).tolist()


@pytest.fixture(scope="module")
def tiny_records():
    return run_experiment(tiny())


def test_zero_cqs_is_exactly_baseline(tiny_records):
    for rec in tiny_records:
        first = rec["grid"][0]
        assert first["num_cqs"] == 0 and first["normalized_value"] == 100.0
        assert first["bundle"] == rec["gui_bundle"]
        assert rec["n_queries"] == 20 and 0.0 <= rec["proxy_accuracy"] <= 1.0
        assert all(e["normalized_value"] > 0 for e in rec["grid"])
        assert rec["optimal_value"] >= max(e["true_value"] for e in rec["grid"]) - 1e-9


def test_num_cqs_zero_run():
    rec = run_student(tiny(num_cqs=0, eval_grid=(0,)), 0)
    assert [e["normalized_value"] for e in rec["grid"]] == [100.0] and rec["n_queries"] == 0


def test_perfect_gui_cannot_be_beaten():
    cfg = tiny(mistakes=MistakeProfile(gamma=0.0))
    for rec in run_experiment(cfg):
        assert rec["gui_value"] == pytest.approx(rec["optimal_value"])
        assert all(e["normalized_value"] <= 100.0 + 1e-9 for e in rec["grid"])


def test_student_results_do_not_depend_on_order(tiny_records):
    again = run_student(tiny(), 1)
    assert json.dumps(again, sort_keys=True) == json.dumps(tiny_records[1], sort_keys=True)


def test_outputs_and_resume(tmp_path):
    cfg = tiny(num_students=1)
    run_experiment(cfg, tmp_path)
    assert len(read_results(tmp_path / "results.jsonl")) == 1
    run_experiment(cfg.with_overrides(num_students=2), tmp_path)
    recs = read_results(tmp_path / "results.jsonl")
    assert [r["student_id"] for r in recs] == [0, 1]
    rows = read_csv(tmp_path / "summary.csv")
    assert [int(r["num_cqs"]) for r in rows] == [0, 10, 20]
    assert (tmp_path / "summary.csv").read_text().startswith("# schema_version=1\n")
    run_experiment(cfg, tmp_path, resume=False)
    assert len(read_results(tmp_path / "results.jsonl")) == 1


def test_parallel_workers_match_serial(tiny_records):
    par = run_experiment(tiny(), workers=2)
    assert json.dumps(par, sort_keys=True) == json.dumps(tiny_records, sort_keys=True)


def test_llm_mode_with_stub_backend(tmp_path):
    cfg = tiny(num_students=1, **{"proxy.mode": "llm", "proxy.max_in_flight": 2})
    stub = StubBackend(["<CHOICE>Bundle A</CHOICE>", "<CHOICE>Bundle B</CHOICE>", "???"])
    recs = run_experiment(cfg, tmp_path, backend=stub)
    lines = (tmp_path / "transcripts.jsonl").read_text().splitlines()
    assert len(lines) == len(stub.calls) >= 20
    assert recs[0]["n_queries"] == 20


def test_aggregate_rows(tiny_records):
    rows = aggregate(tiny_records)
    assert [r["num_cqs"] for r in rows] == [0, 10, 20]
    assert rows[0]["mean_normalized_value"] == 100.0
    assert "kendall_tau@0.05" in rows[0]
    np.testing.assert_array_equal(final_values(tiny_records, 0), [100.0, 100.0])


# suites

def test_suite_shapes():
    assert len(suite_cells(ExperimentConfig(), "acquisition")) == 4
    assert [c.proxy.accuracy for _, c in suite_cells(ExperimentConfig(), "accuracy_grid")] == [
        0.55, 0.60, 0.65, 0.70]
    assert [c.mistakes.gamma for _, c in suite_cells(ExperimentConfig(), "noise_gamma")] == [
        0.5, 0.75, 0.9, 1.0, 1.1, 1.25]
    assert set(SUITES) == {"main", "noise_gamma", "cot", "gce_vs_bce", "acquisition",
                           "accuracy_grid"}
    with pytest.raises(ValueError):
        suite_cells(ExperimentConfig(), "nope")


def _fake(values):
    return [{"student_id": i, "proxy_accuracy": 0.7,
             "grid": [{"num_cqs": 0, "normalized_value": 100.0},
                      {"num_cqs": 5, "normalized_value": v}]} for i, v in enumerate(values)]


def test_suite_table_single_seed_convention():
    rows = suite_table([("a", _fake([110.0])), ("b", _fake([90.0]))])
    assert [r["cell"] for r in rows] == ["a", "b"]
    assert rows[0]["ci95"] == 0.0 and rows[0]["p_value"] == 1.0
    assert rows[1]["p_first_better"] == 1.0


def test_run_suite_writes_table(tmp_path):
    rows = run_suite(tiny(num_students=1, num_cqs=10, eval_grid=(0, 10)), "gce_vs_bce", tmp_path)
    assert [r["cell"] for r in rows] == ["gce", "bce"]
    assert (tmp_path / "gce_vs_bce.csv").exists()
    assert (tmp_path / "gce_vs_bce" / "bce" / "results.jsonl").exists()


# hpo

def test_hpo_budget_one_and_determinism():
    seen = []

    def objective(cfg):
        seen.append(cfg)
        return cfg.model.class_lr

    best, trials = hpo_search(tiny(), 1, rng=0, objective=objective)
    assert best is trials[0] and len(trials) == 1
    _, again = hpo_search(tiny(), 1, rng=0, objective=objective)
    assert again[0]["params"] == trials[0]["params"]
    assert seen[0].proxy.mode == "simulated" and seen[0].num_students == 10
    assert seen[0].eval_grid == (0, seen[0].num_cqs)


def test_hpo_ties_keep_first_and_log(tmp_path):
    best, trials = hpo_search(tiny(), 4, rng=1, objective=lambda c: 1.0,
                              log_path=tmp_path / "t.jsonl")
    assert best["trial"] == 0 and len(trials) == 4
    assert len((tmp_path / "t.jsonl").read_text().splitlines()) == 4


def test_hpo_samples_inside_ranges():
    rng = np.random.default_rng(5)
    for _ in range(200):
        t = sample_trial(HPO_SPACE, rng)
        assert 1e-4 <= t["model.class_lr"] <= 0.1 and 0.001 <= t["model.q"] <= 1.0
        assert t["model.class_batch_size"] in HPO_SPACE["model.class_batch_size"]
        apply_trial(ExperimentConfig(), t)
    with pytest.raises(ValueError):
        hpo_search(tiny(), 0)


# cli

def test_cli_run_and_report(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.yaml"
    save_config(tiny(num_students=1, num_cqs=10, eval_grid=(0, 10)), cfg_path)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(out), "--seed", "3",
                     "--accuracy", "0.9"]) == 0
    cfg_written = json.loads((out / "config.json").read_text())
    assert cfg_written["seed"] == 3 and cfg_written["proxy"]["accuracy"] == 0.9
    capsys.readouterr()
    assert cli.main(["report", str(out / "results.jsonl"), "--csv", str(tmp_path / "s.csv")]) == 0
    printed = capsys.readouterr().out
    assert "mean_normalized_value" in printed and (tmp_path / "s.csv").exists()


def test_cli_rejects_unknown_suite():
    with pytest.raises(SystemExit):
        cli.main(["suite", "everything"])
