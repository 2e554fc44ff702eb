"""Command-line front end: `tune`, `brute-force`, and `report`.

Workload files are JSON arrays of layer shapes (see knobspace.load_workloads);
oracle/constraint overrides come from a JSON config with optional "oracle" and
"constraints" sections.  Each tuned layer writes `<name>.<strategy>.trials.jsonl`
and `<name>.<strategy>.summary.json` into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from . import tuner
from .knobspace import load_workloads
from .oracle import constraints_from_dict, params_from_dict
from .tuner import TunerConfig, apply_fidelity


def _load_oracle_config(path):
    raw = json.loads(Path(path).read_text())
    params = params_from_dict(raw.get("oracle", {}))
    constraints = constraints_from_dict(raw.get("constraints", {}))
    return params, constraints


def _base_config(args) -> TunerConfig:
    config = TunerConfig(strategy=args.strategy, seed=args.seed)
    if args.fidelity:
        config = apply_fidelity(config, args.fidelity)
    if args.oracle:
        params, constraints = _load_oracle_config(args.oracle)
        config = dataclasses.replace(config, oracle=params, constraints=constraints)
    if args.budget is not None:
        config = dataclasses.replace(config, budget=args.budget)
    return config


def _cmd_tune(args) -> int:
    workloads = load_workloads(args.workloads)
    config = _base_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outcomes = tuner.tune_network(workloads, config)
    for outcome in outcomes:
        stem = f"{outcome.workload}.{outcome.strategy}"
        (out_dir / f"{stem}.trials.jsonl").write_text(
            "\n".join(tuner.trial_log_lines(outcome)) + "\n")
        (out_dir / f"{stem}.summary.json").write_text(
            json.dumps(tuner.summary_dict(outcome), indent=2) + "\n")
        print(f"{outcome.workload}: best_fitness={outcome.best.fitness:.6g} "
              f"gflops={outcome.best.gflops:.6g} "
              f"measurements={outcome.measurements_used}")
    (out_dir / f"network.{config.strategy}.summary.json").write_text(
        json.dumps(tuner.network_summary(outcomes), indent=2) + "\n")
    return 0


def _cmd_brute_force(args) -> int:
    workloads = load_workloads(args.workloads)
    params = constraints = None
    if args.oracle:
        params, constraints = _load_oracle_config(args.oracle)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for workload, space in workloads:
        result = tuner.brute_force(space, workload, params, constraints)
        payload = {
            "workload": workload.name,
            "best_config": result.best_values,
            "best_index": result.best_index,
            "best_fitness": result.best.fitness,
            "best_gflops": result.best.gflops,
            "best_latency_s": result.best.latency,
            "n_valid": result.n_valid,
            "total_configs": result.total,
        }
        (out_dir / f"{workload.name}.brute.json").write_text(json.dumps(payload, indent=2) + "\n")
        print(f"{workload.name}: optimum fitness={result.best.fitness:.6g} "
              f"({result.n_valid}/{result.total} valid)")
    return 0


def _cmd_report(args) -> int:
    in_dir = Path(args.input)
    rows = []
    for log_path in sorted(in_dir.glob("*.trials.jsonl")):
        layer, strategy = log_path.name.rsplit(".trials.jsonl", 1)[0].rsplit(".", 1)
        best_gflops = 0.0
        best_fitness = float("-inf")
        for line in log_path.read_text().splitlines():
            rec = json.loads(line)
            if rec["fitness"] >= best_fitness:
                best_fitness = rec["fitness"]
                best_gflops = rec["gflops"]
            rows.append({"layer": layer, "strategy": strategy, "trial": rec["trial"],
                         "best_gflops": best_gflops, "best_fitness": best_fitness})
    with open(args.out, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["layer", "strategy", "trial",
                                               "best_gflops", "best_fitness"])
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cotune",
                                     description="Convolution-kernel configuration auto-tuner")
    sub = parser.add_subparsers(dest="command", required=True)

    tune = sub.add_parser("tune", help="tune every layer in a workload file")
    tune.add_argument("--workloads", required=True)
    tune.add_argument("--strategy", choices=tuner.STRATEGIES, default="dcoc")
    tune.add_argument("--budget", type=int, default=None)
    tune.add_argument("--seed", type=int, default=0)
    tune.add_argument("--out", required=True)
    tune.add_argument("--oracle", default=None, help="JSON file with oracle/constraints sections")
    tune.add_argument("--fidelity", choices=("paper", "desk"), default=None)
    tune.set_defaults(func=_cmd_tune)

    brute = sub.add_parser("brute-force", help="exhaustively enumerate the ground truth")
    brute.add_argument("--workloads", required=True)
    brute.add_argument("--out", required=True)
    brute.add_argument("--oracle", default=None)
    brute.set_defaults(func=_cmd_brute_force)

    report = sub.add_parser("report", help="collect trial logs into a convergence CSV")
    report.add_argument("--in", dest="input", required=True)
    report.add_argument("--out", required=True)
    report.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
