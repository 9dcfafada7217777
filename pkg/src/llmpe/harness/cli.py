"""Command line entry point: ``llmpe run|suite|hpo|report``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .hpo import hpo_search
from .runner import aggregate, read_results, run_experiment, write_csv
from .suites import SUITES, run_suite


def _base_config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.students is not None:
        changes["num_students"] = args.students
    if args.proxy_mode is not None:
        changes["proxy.mode"] = args.proxy_mode
    if args.accuracy is not None:
        changes["proxy.accuracy"] = args.accuracy
    if args.endpoint is not None:
        changes["proxy.endpoint"] = args.endpoint
    if args.model is not None:
        changes["proxy.model"] = args.model
    if args.replay is not None:
        changes["proxy.backend"] = "replay"
        changes["proxy.replay_path"] = args.replay
    return config.with_overrides(**changes) if changes else config


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON experiment config")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--students", type=int, help="number of students")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--proxy-mode", choices=("simulated", "llm"))
    p.add_argument("--accuracy", type=float, help="simulated proxy accuracy")
    p.add_argument("--endpoint", help="chat-completion base URL")
    p.add_argument("--model", help="chat model name")
    p.add_argument("--replay", help="replay fixture to answer LLM requests from")
    p.add_argument("--workers", type=int, default=1, help="parallel student workers")
    p.add_argument("--fresh", action="store_true", help="discard existing results instead of resuming")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llmpe", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment")
    _common(p)

    p = sub.add_parser("suite", help="run an ablation suite")
    p.add_argument("suite", choices=tuple(SUITES))
    _common(p)

    p = sub.add_parser("hpo", help="random hyperparameter search")
    _common(p)
    p.add_argument("--budget", type=int, default=20)
    p.add_argument("--hpo-seeds", type=int, default=10, help="students per trial")

    p = sub.add_parser("report", help="summarize a results.jsonl file")
    p.add_argument("results", help="path to results.jsonl")
    p.add_argument("--csv", help="also write the summary here")
    return parser


def _print_rows(rows) -> None:
    if not rows:
        print("(no results)")
        return
    keys = [k for k in rows[0] if "@" not in k]
    print("\t".join(keys))
    for r in rows:
        print("\t".join("" if r[k] is None else (f"{r[k]:.4g}" if isinstance(r[k], float) else str(r[k]))
                        for k in keys))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.command == "report":
        records = read_results(args.results)
        rows = aggregate(records)
        if args.csv:
            write_csv(rows, args.csv)
        _print_rows(rows)
        return 0

    config = _base_config(args)
    out = Path(args.out)
    if args.command == "run":
        records = run_experiment(config, out, workers=args.workers, resume=not args.fresh)
        _print_rows(aggregate(records))
    elif args.command == "suite":
        _print_rows(run_suite(config, args.suite, out, workers=args.workers, resume=not args.fresh))
    elif args.command == "hpo":
        out.mkdir(parents=True, exist_ok=True)
        best, _ = hpo_search(config, args.budget, rng=config.seed, n_seeds=args.hpo_seeds,
                             log_path=out / "hpo_trials.jsonl")
        (out / "hpo_best.json").write_text(json.dumps(best, indent=2, sort_keys=True) + "\n")
        print(json.dumps(best, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
