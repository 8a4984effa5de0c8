"""Command line interface.

Subcommands: generate (instance suites), train (PPO), solve (one instance
with a rule or checkpoint), bench (suite x solvers gap report), oracle
(exact optimum for tiny instances).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, env, net, oracle, trainer
from .instance import InstanceError, serialize


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _add_generate(sub):
    p = sub.add_parser("generate", help="generate a synthetic instance suite with a manifest")
    p.add_argument("--geometries", required=True, help="comma-separated JxM tokens, e.g. 6x6,10x10,100x20")
    p.add_argument("--count", type=int, default=100, help="instances per geometry")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dur-lo", type=int, default=1)
    p.add_argument("--dur-hi", type=int, default=99)
    p.add_argument("--out", required=True, help="output directory")


def _add_train(sub):
    p = sub.add_parser("train", help="train a policy with PPO")
    p.add_argument("--config", help="JSON file mirroring TrainConfig field names")
    p.add_argument("--geometry", help="JxM shortcut for num_jobs/num_machines")
    p.add_argument("--updates", type=int, help="shortcut for total_updates")
    p.add_argument("--seed", type=int, help="shortcut for seed")
    p.add_argument("--no-shaping", action="store_true", help="terminal reward only (ablation)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config field")
    p.add_argument("--out", required=True, help="output directory for checkpoint and log")
    p.add_argument("--quiet", action="store_true")


def _add_solve(sub):
    p = sub.add_parser("solve", help="solve one instance with a rule or checkpoint")
    p.add_argument("--instance", required=True)
    p.add_argument("--format", choices=["standard", "taillard"], default="standard")
    p.add_argument("--solver", required=True, help="mwkr | mor | fdd_mwr | checkpoint path")
    p.add_argument("--greedy", action="store_true", help="argmax decoding for checkpoints (default: sample)")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--out", help="write schedule JSON here")


def _add_bench(sub):
    p = sub.add_parser("bench", help="run solvers over a suite and report makespans and gaps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--solvers", required=True, help="comma-separated rule names / checkpoint paths")
    p.add_argument("--bounds", default="computed-lb", help='"computed-lb" or a JSON bounds file')
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--workers", type=int, default=0)
    p.add_argument("--sample", action="store_true", help="sample checkpoint actions instead of greedy")
    p.add_argument("--seed", type=int, default=0)


def _add_oracle(sub):
    p = sub.add_parser("oracle", help="exact optimum of a tiny instance by exhaustive search")
    p.add_argument("--instance", required=True)
    p.add_argument("--format", choices=["standard", "taillard"], default="standard")
    p.add_argument("--budget", type=int, default=2_000_000)
    p.add_argument("--out", help="write the optimal dispatch sequence JSON here")


def build_parser():
    ap = argparse.ArgumentParser(prog="ginshop", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    _add_generate(sub)
    _add_train(sub)
    _add_solve(sub)
    _add_bench(sub)
    _add_oracle(sub)
    return ap


def cmd_generate(args) -> int:
    geometries = [t for t in args.geometries.split(",") if t]
    path = bench.generate_suite(geometries, args.count, args.seed, args.dur_lo, args.dur_hi, args.out)
    print(f"wrote {len(geometries) * args.count} instances, manifest {path}")
    return 0


def cmd_train(args) -> int:
    fields = {}
    if args.config:
        fields.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    if args.geometry:
        j, m = bench.parse_geometry(args.geometry)
        fields["num_jobs"], fields["num_machines"] = j, m
    if args.updates is not None:
        fields["total_updates"] = args.updates
    if args.seed is not None:
        fields["seed"] = args.seed
    if args.no_shaping:
        fields["shaping"] = False
    for item in args.set:
        key, _, value = item.partition("=")
        fields[key] = _parse_value(value)
    cfg = trainer.TrainConfig.from_dict(fields)

    progress = None
    if not args.quiet:
        def progress(update, mean_makespan, stats):
            if update % 50 == 0 or update == cfg.total_updates - 1:
                print(
                    f"update {update}/{cfg.total_updates} mean_makespan={mean_makespan:.1f} "
                    f"entropy={stats['entropy']:.3f}",
                    flush=True,
                )

    trainer.train(cfg, args.out, progress=progress)
    print(f"checkpoint: {Path(args.out) / 'checkpoint.json'}")
    print(f"log: {Path(args.out) / 'train_log.csv'}")
    return 0


def cmd_solve(args) -> int:
    inst = bench.read_instance(args.instance, args.format)
    solver = bench.resolve_solver(args.solver)
    state = solver.run(inst, greedy=args.greedy, seed=args.seed)
    if not env.validate_schedule(inst, state):
        print("ERROR: produced schedule failed validation", file=sys.stderr)
        return 1
    rows = env.export_schedule(state)
    if args.out:
        Path(args.out).write_text(json.dumps(rows, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(f"makespan {env.makespan(state)}")
    return 0


def cmd_bench(args) -> int:
    solvers = [t for t in args.solvers.split(",") if t]
    rows, aggregates, _, all_valid = bench.run_bench(
        args.manifest,
        solvers,
        bounds_source=args.bounds,
        out_prefix=args.out,
        workers=args.workers,
        greedy=not args.sample,
        seed=args.seed,
    )
    for a in aggregates:
        print(
            f"{a['geometry']:>8} {a['solver']:>14} mean {a['mean_makespan']:9.1f} "
            f"std {a['std_makespan']:8.1f} gap {a['mean_gap']:.4f}"
        )
    if not all_valid:
        print("ERROR: at least one schedule failed validation (see FAILED rows)", file=sys.stderr)
        return 1
    print(f"report: {args.out}.csv")
    return 0


def cmd_oracle(args) -> int:
    inst = bench.read_instance(args.instance, args.format)
    try:
        result = oracle.optimal_makespan(inst, node_budget=args.budget)
    except oracle.BudgetExceeded as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1
    print(f"optimum {result.optimum} (explored {result.explored} nodes)")
    if args.out:
        seq = [{"job": o.job, "step": o.step, "flat": o.flat} for o in result.optimal_sequence]
        Path(args.out).write_text(json.dumps(seq, indent=2) + "\n", encoding="utf-8")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "generate": cmd_generate,
        "train": cmd_train,
        "solve": cmd_solve,
        "bench": cmd_bench,
        "oracle": cmd_oracle,
    }
    try:
        return handlers[args.command](args)
    except (InstanceError, net.CheckpointError, bench.SolverError, ValueError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
